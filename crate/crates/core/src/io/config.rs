//! Run configuration: one JSON document describing data generation, model,
//! training and evaluation, plus the master seed everything derives from.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalOptions;
use crate::models::{HaeMode, ModelConfig};
use crate::sph::{Scenario, ScenarioConfig};
use crate::training::TrainConfig;

/// Dataset split sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Taylor-Green: independent trajectories per split.
    pub train_trajectories: usize,
    pub valid_trajectories: usize,
    pub test_trajectories: usize,
    /// Reverse Poiseuille: fractions of the single long trajectory assigned
    /// to consecutive train/valid/test time windows.
    pub time_split: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { train_trajectories: 80, valid_trajectories: 10, test_trajectories: 10, time_split: [0.8, 0.1, 0.1] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Predicted steps per test rollout.
    pub rollout_steps: usize,
    pub options: EvalOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { rollout_steps: 100, options: EvalOptions::default() }
    }
}

/// Everything needed to regenerate a run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Master seed; trajectory seeds are derived from it.
    pub seed: u64,
}

/// Seed-derivation streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedPurpose {
    Trajectory = 1,
    ModelInit = 2,
    Training = 3,
}

/// Deterministic, well-mixed child seed of `master` for `(purpose, index)`.
pub fn derive_seed(master: u64, purpose: SeedPurpose, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng.next_u64()
}

/// Splits of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl RunConfig {
    /// Desk-scale Taylor-Green run: `n_side^3` particles, a 2-layer SEGNN
    /// with the given embedding, and small split counts.
    pub fn tgv(n_side: usize, hae: HaeMode) -> Self {
        let mut run = Self {
            scenario: ScenarioConfig::tgv(n_side),
            dataset: DatasetConfig { train_trajectories: 2, valid_trajectories: 1, test_trajectories: 1, ..Default::default() },
            model: ModelConfig::segnn(hae, 2, 16, 5),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
        };
        run.set_seed(0);
        run
    }

    /// Sets the master seed and re-derives the model and training seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.model.init_seed = derive_seed(seed, SeedPurpose::ModelInit, 0);
        self.train.seed = derive_seed(seed, SeedPurpose::Training, 0);
    }

    /// Seed of the `index`-th trajectory of `split`.
    pub fn trajectory_seed(&self, split: Split, index: usize) -> u64 {
        derive_seed(self.seed, SeedPurpose::Trajectory, ((split as u64) << 32) | index as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        let h = self.model.history;
        match self.scenario.scenario {
            Scenario::Tgv => {
                if self.dataset.train_trajectories == 0 {
                    return Err(Error::Config("at least one training trajectory is required".into()));
                }
                if self.scenario.frames < h + 2 {
                    return Err(Error::Config(format!("history {h} needs at least {} frames", h + 2)));
                }
            }
            Scenario::Rpf => {
                let s = self.dataset.time_split;
                if s.iter().any(|&x| !(x > 0.0)) || ((s.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
                    return Err(Error::Config("time_split fractions must be positive and sum to 1".into()));
                }
                for (split, range) in Split::ALL.iter().zip(self.time_windows()) {
                    if range.1 - range.0 < h + 2 {
                        return Err(Error::Config(format!(
                            "{} window has {} frames, history {h} needs {}",
                            split.name(),
                            range.1 - range.0,
                            h + 2
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Consecutive `[start, end)` frame windows of the train/valid/test splits.
    pub fn time_windows(&self) -> [(usize, usize); 3] {
        let f = self.scenario.frames;
        let s = self.dataset.time_split;
        let a = ((s[0] * f as f64).round() as usize).min(f);
        let b = (((s[0] + s[1]) * f as f64).round() as usize).clamp(a, f);
        [(0, a), (a, b), (b, f)]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let run: Self = serde_json::from_str(text)?;
        run.validate()?;
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
