//! On-disk formats and run configuration.
//!
//! Trajectories (`LGTR`) store single-precision frames; checkpoints
//! (`LGCK`) store double-precision parameters and optimizer moments. Both
//! are flat little-endian binaries with a version field that readers check,
//! and every writer/reader pair is a bitwise inverse.

mod binary;
pub mod checkpoint;
pub mod config;
pub mod report;
pub mod trajectory;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{derive_seed, DatasetConfig, EvalConfig, RunConfig, SeedPurpose, Split};
pub use report::{
    curve_csv, ekin_csv, eval_steps_csv, parse_curve_csv, read_curve_csv, summary_json, write_curve_csv, EvalSummary,
};
pub use trajectory::{read_trajectory, write_trajectory, TrajectoryFile, TRAJECTORY_MAGIC, TRAJECTORY_VERSION};
