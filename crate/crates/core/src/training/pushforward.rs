use rand::Rng;

use crate::autodiff::{Grads, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::models::{GraphSample, Model};
use crate::sph::Trajectory;

use super::noise::add_noise;
use super::normalize::NormalizationStats;
use super::pairs::{corrected_target, integrate, make_training_pair, sample_from_state};

/// `P(s) ∝ base^s` for `s = 0..=max_steps`. The last weight is one minus the
/// others, so the schedule sums to exactly one.
pub fn pushforward_weights(max_steps: usize, base: f64) -> Result<Vec<f64>> {
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::Config(format!("pushforward base must be positive, got {base}")));
    }
    let raw: Vec<f64> = (0..=max_steps).map(|s| base.powi(s as i32)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let head: f64 = w[..max_steps].iter().sum();
    w[max_steps] = 1.0 - head;
    Ok(w)
}

/// Draws a rollout depth from the schedule.
pub fn sample_depth<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (s, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return s;
        }
    }
    weights.len() - 1
}

/// Builds the training sample at frame `t` reached by rolling the model
/// `depth` steps (no gradient) from the noisy ground-truth sample at
/// `t - depth`. The target is corrected against the true frame `t + 1`.
#[allow(clippy::too_many_arguments)]
pub fn pushforward_sample(
    model: &Model,
    frozen: &ParamStore<f64>,
    stats: &NormalizationStats,
    traj: &Trajectory,
    t: usize,
    depth: usize,
    noise_std: f64,
    noise_seed: u64,
    radius: f64,
) -> Result<GraphSample> {
    let h = model.config().history;
    if t < h + depth {
        return Err(Error::Index(format!("frame {t} leaves no room for {depth} pushforward steps with history {h}")));
    }
    let mut sample = add_noise(&make_training_pair(traj, t - depth, h, radius)?, noise_std, noise_seed)?;
    if depth == 0 {
        return Ok(sample);
    }
    for _ in 0..depth {
        let acc = model.predict(frozen, &sample, stats)?;
        let (p, v) = integrate(&traj.domain, &sample.positions, sample.velocities.last().expect("history"), &acc);
        let mut history = sample.velocities;
        history.remove(0);
        history.push(v);
        sample = sample_from_state(traj, p, history, radius, None)?;
    }
    let last = sample.velocities.last().expect("history");
    sample.target = Some(corrected_target(&traj.domain, &sample.positions, last, &traj.positions[t + 1]));
    Ok(sample)
}

/// One-step loss on a sample and its gradient with respect to `params`.
pub fn one_step_loss(model: &Model, params: &ParamStore<f64>, sample: &GraphSample, stats: &NormalizationStats) -> Result<(f64, Grads<f64>)> {
    let input = model.prepare(sample, stats)?;
    let mut tape = Tape::new();
    let loss = model.loss(&mut tape, params, &input)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok((value, tape.backward(loss, params)?))
}

/// Pushforward loss: the rollout segment is evaluated with `params` held
/// constant and only the final one-step prediction is differentiated.
#[allow(clippy::too_many_arguments)]
pub fn pushforward_loss(
    model: &Model,
    params: &ParamStore<f64>,
    stats: &NormalizationStats,
    traj: &Trajectory,
    t: usize,
    depth: usize,
    noise_std: f64,
    noise_seed: u64,
    radius: f64,
) -> Result<(f64, Grads<f64>)> {
    let sample = pushforward_sample(model, params, stats, traj, t, depth, noise_std, noise_seed, radius)?;
    one_step_loss(model, params, &sample, stats)
}
