//! Rollout quality measures: position MSE, kinetic-energy error and the
//! Sinkhorn divergence between particle distributions, plus a brute-force
//! optimal-transport oracle for small instances.

mod report;
mod sinkhorn;

pub use report::{evaluate_rollout, frame_kinetic_energies, kinetic_energy, mse_ekin, mse_positions, EvalOptions, EvalReport};
pub use sinkhorn::{exact_ot, sinkhorn_distance, SinkhornConfig, SinkhornResult, EXACT_OT_MAX_POINTS};
