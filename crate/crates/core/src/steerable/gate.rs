use super::layout::{IrrepsLayout, SteerableTensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `x * sigmoid(x)`.
pub fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

pub fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

/// Channel counts of a gated block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateSpec {
    /// Scalars passed through SiLU.
    pub pass: usize,
    /// Vector channels, each paired with one trailing gate scalar.
    pub vectors: usize,
}

impl GateSpec {
    /// Derives the split from an input layout; the trailing `n1` scalars are gates.
    pub fn from_input(layout: &IrrepsLayout) -> Result<Self> {
        let n0 = layout.num_scalars();
        let n1 = layout.num_vectors();
        if n0 < n1 {
            return Err(Error::Layout(format!(
                "gate needs {n1} gate scalars but layout {layout} has only {n0} scalars"
            )));
        }
        Ok(Self { pass: n0 - n1, vectors: n1 })
    }

    pub fn input_layout(&self) -> IrrepsLayout {
        IrrepsLayout::scalars_vectors(self.pass + self.vectors, self.vectors)
    }

    pub fn output_layout(&self) -> IrrepsLayout {
        IrrepsLayout::scalars_vectors(self.pass, self.vectors)
    }
}

/// Row kernel: `input` follows `in_index`, `out` the canonical output layout.
pub fn gate_forward<T: Real>(scalars: &[usize], vectors: &[usize], spec: GateSpec, input: &[T], out: &mut [T]) {
    for k in 0..spec.pass {
        out[k] = silu(input[scalars[k]]);
    }
    for c in 0..spec.vectors {
        let g = sigmoid(input[scalars[spec.pass + c]]);
        let o = vectors[c];
        let dst = spec.pass + 3 * c;
        out[dst] = input[o] * g;
        out[dst + 1] = input[o + 1] * g;
        out[dst + 2] = input[o + 2] * g;
    }
}

/// Accumulates `d<gout, gate(input)>/d input` into `gin`.
pub fn gate_backward<T: Real>(
    scalars: &[usize],
    vectors: &[usize],
    spec: GateSpec,
    input: &[T],
    gout: &[T],
    gin: &mut [T],
) {
    for k in 0..spec.pass {
        let s = scalars[k];
        gin[s] = gin[s] + gout[k] * silu_grad(input[s]);
    }
    for c in 0..spec.vectors {
        let gs = scalars[spec.pass + c];
        let g = sigmoid(input[gs]);
        let o = vectors[c];
        let src = spec.pass + 3 * c;
        let mut dot = T::zero();
        for d in 0..3 {
            gin[o + d] = gin[o + d] + gout[src + d] * g;
            dot = dot + gout[src + d] * input[o + d];
        }
        gin[gs] = gin[gs] + dot * g * (T::one() - g);
    }
}

/// SiLU on the leading scalars; each vector scaled by the sigmoid of its gate.
pub fn gated_nonlinearity<T: Real>(f: &SteerableTensor<T>) -> Result<SteerableTensor<T>> {
    let spec = GateSpec::from_input(f.layout())?;
    let idx = f.layout().index();
    let mut out = SteerableTensor::zeros(spec.output_layout());
    gate_forward(&idx.scalars, &idx.vectors, spec, f.coeffs(), out.coeffs_mut());
    Ok(out)
}
