use super::cg::{cg_product, CgWeights};
use super::gate::{gated_nonlinearity, GateSpec};
use super::layout::SteerableTensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One steerable linear map: a CG product conditioned on an attribute, an
/// optional bias on the scalar outputs, and an optional gate.
#[derive(Clone, Debug)]
pub struct SteerableLayer<T> {
    pub weights: CgWeights<T>,
    pub bias: Option<Vec<T>>,
    pub gated: bool,
}

impl<T: Real> SteerableLayer<T> {
    pub fn apply(&self, f: &SteerableTensor<T>, attr: &SteerableTensor<T>) -> Result<SteerableTensor<T>> {
        let mut out = cg_product(f, attr, &self.weights, self.weights.output())?;
        if let Some(bias) = &self.bias {
            let idx = out.layout().index();
            if bias.len() != idx.n0() {
                return Err(Error::Shape(format!("bias of length {} for {} scalars", bias.len(), idx.n0())));
            }
            let coeffs = out.coeffs_mut();
            for (&o, &b) in idx.scalars.iter().zip(bias) {
                coeffs[o] = coeffs[o] + b;
            }
        }
        if self.gated {
            GateSpec::from_input(out.layout())?;
            out = gated_nonlinearity(&out)?;
        }
        Ok(out)
    }
}

/// Chains steerable layers, each conditioned on the same attribute.
pub fn steerable_mlp<T: Real>(
    f: &SteerableTensor<T>,
    attr: &SteerableTensor<T>,
    layers: &[SteerableLayer<T>],
) -> Result<SteerableTensor<T>> {
    let (first, rest) = layers
        .split_first()
        .ok_or_else(|| Error::Config("steerable_mlp needs at least one layer".into()))?;
    let mut h = first.apply(f, attr)?;
    for layer in rest {
        h = layer.apply(&h, attr)?;
    }
    Ok(h)
}
