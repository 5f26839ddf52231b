//! Lagrangian fluid workbench.
//!
//! Generates periodic SPH datasets (Taylor-Green vortex, reverse Poiseuille
//! flow), trains graph-network surrogates that predict per-particle
//! accelerations at a coarse time step, and scores rollouts by position MSE,
//! kinetic energy and Sinkhorn divergence.
//!
//! # Modules
//! - [`steerable`] -- O(3)-steerable features up to degree 1: layouts,
//!   spherical-harmonic embedding, Clebsch-Gordan products, gates.
//! - [`neighbors`] -- periodic cell-list fixed-radius search.
//! - [`sph`] -- transport-velocity SPH solver and scenario generators.
//! - [`autodiff`] -- operation-level reverse-mode tape, Adam, gradient checks.
//! - [`models`] -- GNS baseline and SEGNN with historical attribute embeddings.
//! - [`training`] -- sample construction, normalization, noise, pushforward, rollout.
//! - [`metrics`] -- position MSE, kinetic energy, Sinkhorn divergence, exact OT.
//! - [`io`] -- binary trajectory/checkpoint formats, run configs, reports.
//! - [`pipeline`] -- the `generate`, `train`, `rollout` and `evaluate` commands.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is
//! enabled (the default) and fall back to plain iterators otherwise. Every
//! reduction uses a fixed block order, so results do not depend on the
//! thread count.

pub mod autodiff;
pub mod error;
pub mod io;
pub mod metrics;
pub mod models;
pub mod neighbors;
pub mod par;
pub mod pipeline;
pub mod scalar;
pub mod sph;
pub mod steerable;
pub mod training;
pub mod vec3;

pub use error::{Error, Result};
pub use scalar::Real;
