use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, Grads, LrSchedule, OptimizerState, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::metrics::mse_positions;
use crate::models::Model;
use crate::par;
use crate::sph::Trajectory;
use crate::vec3::Vec3;

use super::normalize::{NormalizationMode, NormalizationStats};
use super::pairs::{connectivity_radius, frame_velocity, make_training_pair};
use super::pushforward::{pushforward_loss, pushforward_weights, sample_depth};
use super::rollout::{rollout, LearnedSimulator};

/// Optimization and data-augmentation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Per-component std of the accumulated input noise, frame units.
    pub noise_std: f64,
    /// Largest pushforward depth.
    pub pushforward_steps: usize,
    /// Decay base of the pushforward depth distribution.
    pub pushforward_base: f64,
    pub batch_size: usize,
    /// Total optimizer steps.
    pub steps: u64,
    pub lr: LrSchedule,
    pub adam: AdamConfig,
    /// Connectivity radius in units of the mean particle spacing.
    pub radius_factor: f64,
    pub seed: u64,
    /// Validation (and curve row) interval in optimizer steps.
    pub eval_every: u64,
    /// One-step validation samples per validation trajectory.
    pub valid_samples: usize,
    /// Rollout length for the validation position MSE (0 disables it).
    pub valid_rollout_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            noise_std: 3e-4,
            pushforward_steps: 5,
            pushforward_base: 0.5,
            batch_size: 1,
            steps: 2000,
            lr: LrSchedule::Exponential { lr0: 1e-3, lr_final: 1e-5, total_steps: 2000 },
            adam: AdamConfig::default(),
            radius_factor: 1.5,
            seed: 0,
            eval_every: 100,
            valid_samples: 8,
            valid_rollout_steps: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        if !(self.radius_factor > 0.0) {
            return Err(Error::Config("radius_factor must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        pushforward_weights(self.pushforward_steps, self.pushforward_base)?;
        Ok(())
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ParamStore<f64>,
    pub optimizer: OptimizerState<f64>,
    pub best_valid: Option<f64>,
}

impl TrainState {
    pub fn new(params: ParamStore<f64>) -> Self {
        let optimizer = OptimizerState::new(&params);
        Self { params, optimizer, best_valid: None }
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }
}

/// Validation metrics of one evaluation point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    /// One-step MSE of normalized accelerations (no noise).
    pub acc_mse: f64,
    /// Mean position MSE over a short rollout (NaN when disabled).
    pub mse_p: f64,
}

/// One row of the training curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    /// Mean training loss since the previous row (NaN at step 0).
    pub train_loss: f64,
    pub valid_acc_mse: f64,
    pub valid_mse_p: f64,
}

/// Pools frame velocities and accelerations of the training trajectories.
pub fn compute_stats(trajs: &[Trajectory], mode: NormalizationMode) -> Result<NormalizationStats> {
    let mut vel: Vec<Vec3> = Vec::new();
    let mut acc: Vec<Vec3> = Vec::new();
    for traj in trajs {
        for k in 1..traj.num_frames() {
            let v = frame_velocity(traj, k);
            if k >= 2 {
                let prev = frame_velocity(traj, k - 1);
                acc.extend(v.iter().zip(&prev).map(|(a, b)| crate::vec3::sub(*a, *b)));
            }
            vel.extend(v);
        }
    }
    NormalizationStats::compute(mode, &vel, &acc)
}

/// Drives optimization of one model on a fixed dataset.
pub struct Trainer<'a> {
    pub model: &'a Model,
    pub config: &'a TrainConfig,
    pub stats: &'a NormalizationStats,
    pub train: &'a [Trajectory],
    pub valid: &'a [Trajectory],
    radius: f64,
    weights: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: &'a Model,
        config: &'a TrainConfig,
        stats: &'a NormalizationStats,
        train: &'a [Trajectory],
        valid: &'a [Trajectory],
    ) -> Result<Self> {
        config.validate()?;
        let first = train.first().ok_or_else(|| Error::Config("empty training set".into()))?;
        let h = model.config().history;
        for traj in train.iter().chain(valid) {
            if traj.domain != first.domain || traj.num_particles() != first.num_particles() {
                return Err(Error::Config("trajectories disagree in box or particle count".into()));
            }
            if traj.num_frames() < h + 2 {
                return Err(Error::Config(format!(
                    "history {h} needs at least {} frames, trajectory has {}",
                    h + 2,
                    traj.num_frames()
                )));
            }
        }
        let radius = connectivity_radius(&first.domain, first.num_particles(), config.radius_factor);
        let weights = pushforward_weights(config.pushforward_steps, config.pushforward_base)?;
        Ok(Self { model, config, stats, train, valid, radius, weights })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Draws `(trajectory, frame, depth, noise seed)` for every batch item of
    /// `step` from a stream determined by `(seed, step)` alone, so resumed
    /// runs replay the same data order.
    fn batch_plan(&self, step: u64) -> Vec<(usize, usize, usize, u64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(step);
        let h = self.model.config().history;
        (0..self.config.batch_size)
            .map(|_| {
                let traj = rng.random_range(0..self.train.len());
                let frames = self.train[traj].num_frames();
                let max_depth = frames - 2 - h;
                let depth = sample_depth(&self.weights, &mut rng).min(max_depth);
                let t = rng.random_range(h + depth..=frames - 2);
                (traj, t, depth, rng.random())
            })
            .collect()
    }

    /// One optimizer step on a batch; returns the mean batch loss.
    pub fn train_step(&self, state: &mut TrainState) -> Result<f64> {
        let plan = self.batch_plan(state.step());
        let results = par::map_range(plan.len(), |b| {
            let (traj, t, depth, seed) = plan[b];
            pushforward_loss(self.model, &state.params, self.stats, &self.train[traj], t, depth, self.config.noise_std, seed, self.radius)
        });
        let mut total: Option<Grads<f64>> = None;
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l;
            match &mut total {
                Some(acc) => acc.add_assign(&g),
                None => total = Some(g),
            }
        }
        let n = plan.len() as f64;
        let mut grads = total.expect("batch_size >= 1");
        grads.scale(1.0 / n);
        let lr = self.config.lr.lr(state.step());
        adam_step(&mut state.params, &grads, &mut state.optimizer, &self.config.adam, lr)?;
        Ok(loss / n)
    }

    /// Fixed validation frames: evenly spaced admissible frames per trajectory.
    fn valid_frames(&self, traj: &Trajectory) -> Vec<usize> {
        let h = self.model.config().history;
        let (lo, hi) = (h, traj.num_frames() - 2);
        let n = self.config.valid_samples.max(1).min(hi - lo + 1);
        (0..n).map(|k| if n == 1 { lo } else { lo + k * (hi - lo) / (n - 1) }).collect()
    }

    pub fn validate(&self, params: &ParamStore<f64>) -> Result<Validation> {
        let h = self.model.config().history;
        let mut acc_sum = 0.0;
        let mut count = 0usize;
        for traj in self.valid {
            for t in self.valid_frames(traj) {
                let sample = make_training_pair(traj, t, h, self.radius)?;
                let input = self.model.prepare(&sample, self.stats)?;
                let mut tape = Tape::no_grad();
                let loss = self.model.loss(&mut tape, params, &input)?;
                acc_sum += tape.value(loss).item();
                count += 1;
            }
        }
        let acc_mse = if count == 0 { f64::NAN } else { acc_sum / count as f64 };
        let mse_p = if self.config.valid_rollout_steps == 0 || self.valid.is_empty() {
            f64::NAN
        } else {
            let sim = LearnedSimulator { model: self.model, params, stats: self.stats };
            let mut sum = 0.0;
            let mut n = 0usize;
            for traj in self.valid {
                let steps = self.config.valid_rollout_steps.min(traj.num_frames() - h - 1);
                let out = rollout(&sim, traj, 0, steps, self.radius)?;
                if out.diverged_at.is_some() {
                    return Ok(Validation { acc_mse, mse_p: f64::INFINITY });
                }
                for k in 0..steps {
                    sum += mse_positions(&out.trajectory.positions[h + 1 + k], &traj.positions[h + 1 + k], &traj.domain)?;
                    n += 1;
                }
            }
            if n == 0 {
                f64::NAN
            } else {
                sum / n as f64
            }
        };
        Ok(Validation { acc_mse, mse_p })
    }

    /// Runs until `config.steps`, calling `on_eval(row, state, improved)` at
    /// step 0 (fresh runs only), every `eval_every` steps and at the end.
    pub fn run<F>(&self, state: &mut TrainState, mut on_eval: F) -> Result<Vec<CurveRow>>
    where
        F: FnMut(&CurveRow, &TrainState, bool) -> Result<()>,
    {
        let mut rows = Vec::new();
        let mut evaluate = |state: &mut TrainState, train_loss: f64, rows: &mut Vec<CurveRow>| -> Result<()> {
            let v = self.validate(&state.params)?;
            let score = if v.mse_p.is_nan() { v.acc_mse } else { v.mse_p };
            let improved = state.best_valid.is_none_or(|b| score < b);
            if improved {
                state.best_valid = Some(score);
            }
            let row = CurveRow { step: state.step(), train_loss, valid_acc_mse: v.acc_mse, valid_mse_p: v.mse_p };
            on_eval(&row, state, improved)?;
            rows.push(row);
            Ok(())
        };
        if state.step() == 0 {
            evaluate(state, f64::NAN, &mut rows)?;
        }
        let mut window = (0.0, 0usize);
        while state.step() < self.config.steps {
            let loss = self.train_step(state)?;
            window.0 += loss;
            window.1 += 1;
            if state.step() % self.config.eval_every == 0 || state.step() == self.config.steps {
                evaluate(state, window.0 / window.1 as f64, &mut rows)?;
                window = (0.0, 0);
            }
        }
        Ok(rows)
    }
}
