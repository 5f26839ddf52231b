//! Training data, normalization, noise, pushforward loss and rollouts.
//!
//! All kinematic quantities are in frame units: a velocity is the position
//! change over one stored frame and an acceleration the change of that
//! velocity, so integration is `v' = v + a`, `p' = p + v'`.

mod noise;
mod normalize;
mod pairs;
mod pushforward;
mod rollout;
mod trainer;

pub use noise::{add_noise, last_velocity_noise};
pub use normalize::{NormalizationMode, NormalizationStats};
pub use pairs::{connectivity_radius, corrected_target, frame_velocity, integrate, make_training_pair, sample_from_state, ForceField};
pub use pushforward::{one_step_loss, pushforward_loss, pushforward_sample, pushforward_weights, sample_depth};
pub use rollout::{rollout, AccelerationModel, LearnedSimulator, RolloutOutcome, ZeroAcceleration};
pub use trainer::{compute_stats, CurveRow, TrainConfig, TrainState, Trainer, Validation};
