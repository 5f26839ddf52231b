//! Weakly-compressible SPH in the transport-velocity formulation.
//!
//! Density by summation, linear equation of state `p = p0 (rho/rho0 - 1)`
//! with `p0 = rho0 c0^2`, pressure/viscous/transport-stress forces and a
//! background-pressure correction that advects particles with a separate
//! transport velocity. Integration is symplectic Euler:
//!
//! ```text
//! u'  = u + dt a(x, u, u~)
//! u~' = u' + dt a_bg(x)
//! x'  = wrap(x + dt u~')
//! ```

mod kernel;
mod scenario;
mod solver;
mod trajectory;

pub use kernel::QuinticKernel;
pub use scenario::{initial_state, relax_positions, rpf_accel, rpf_init, tgv_init, tgv_velocity, Scenario, ScenarioConfig};
pub use solver::{kinetic_energy, momentum, sph_step, ParticleState, SphSolver};
pub use trajectory::{generate_trajectory, generate_trajectory_with, Trajectory};
