//! Learned simulators mapping a particle graph to per-particle accelerations.
//!
//! * [`Gns`]: a dense encoder-processor-decoder graph network with residual
//!   message passing and layer-normalized latents. Positions enter only via
//!   relative displacements, so it is translation invariant but not
//!   rotation equivariant.
//! * [`Segnn`]: steerable message passing built from Clebsch-Gordan layers
//!   conditioned on edge attributes `Y(p_i - p_j)` and on historical node
//!   attributes merged by a [`Hae`] site per layer (mean, learned weighted
//!   mean, or a gated tensor product with the latest step). Equivariant
//!   under rotations, reflections, translations and node permutations.
//!
//! Neighbor sums inside SEGNN (attribute sums and message aggregation) are
//! divided by [`ModelConfig::avg_num_neighbors`] to keep activations O(1)
//! in deep stacks.

mod config;
mod gns;
mod hae;
mod layers;
mod model;
mod sample;
mod segnn;

pub use config::{HaeMode, ModelConfig, ModelKind};
pub use gns::Gns;
pub use hae::{edge_attributes, history_attributes, stack_history, Hae};
pub use layers::{normal_tensor, shifted_init, Dense, Mlp, SteerableInit, SteerableLinear};
pub use model::{Model, PreparedInput};
pub use sample::{GraphIndex, GraphSample};
pub use segnn::Segnn;
