//! Operation-level reverse-mode differentiation.
//!
//! A [`Tape`] records whole-tensor primitives (dense affine maps, layer
//! norm, SiLU, gathers and ordered scatter-sums, Clebsch-Gordan products,
//! gates, spherical-harmonic embeddings, mean-squared losses). One backward
//! sweep yields a gradient for every entry of a [`ParamStore`]; parameters
//! the loss does not touch get exact zeros.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, LrSchedule, OptimizerState};
pub use gradcheck::{check_gradients, GradCheckReport, LayerError, Objective};
pub use params::{Grads, ParamId, ParamStore};
pub use tape::{RowGroups, Tape, Var};
pub use tensor::Tensor;
