//! O(3)-steerable features restricted to degrees 0 and 1.
//!
//! A feature vector is a direct sum of scalar (l=0, even) and vector
//! (l=1, odd) channels. Coefficients follow the order of the layout entries;
//! inside an l=1 entry, channel `c` occupies the three consecutive slots
//! `3c..3c+3` holding its Cartesian (x, y, z) components, so a rotation or
//! reflection `R` acts on each channel as `R v`.
//!
//! Clebsch-Gordan paths use component normalization: with unit-variance
//! i.i.d. inputs every output component of a single path has unit variance.
//! For l <= 1 the only non-trivial constants are
//! `1 x 1 -> 0: (u . w) / sqrt(3)` and `1 x 1 -> 1: (u x w) / sqrt(2)`.
//!
//! The `1 x 1 -> 1` product is a pseudovector. It commutes with proper
//! rotations but picks up `det R` under reflections, so layers meant to be
//! O(3)-equivariant use [`PathSet::ParityPreserving`], which keeps the other
//! four paths.
//!
//! Gated layouts reserve the trailing `n1` scalar channels as gates, one per
//! vector channel: `[(0, n_pass + n1), (1, n1)] -> [(0, n_pass), (1, n1)]`.

mod cg;
mod gate;
mod layout;
mod mlp;
mod sh;

pub use cg::{cg_backward, cg_forward, cg_product, CgKernel, CgPath, CgWeights, PathSet, KAPPA_DOT, KAPPA_CROSS};
pub use gate::{gate_backward, gate_forward, gated_nonlinearity, sigmoid, silu, silu_grad, GateSpec};
pub use layout::{IrrepsLayout, LayoutIndex, SteerableTensor};
pub use mlp::{steerable_mlp, SteerableLayer};
pub use sh::{sh_embed, sh_embed_backward, sh_embed_into};
