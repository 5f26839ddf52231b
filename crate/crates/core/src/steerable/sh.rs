use super::layout::SteerableTensor;
use crate::scalar::Real;

/// Degree <= 1 spherical-harmonic embedding `[1, v/|v|]` into `out[..4]`.
/// The zero vector maps to `[1, 0, 0, 0]`.
pub fn sh_embed_into<T: Real>(v: &[T], out: &mut [T]) {
    out[0] = T::one();
    let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if n2 > T::min_positive_value() {
        let inv = T::one() / n2.sqrt();
        out[1] = v[0] * inv;
        out[2] = v[1] * inv;
        out[3] = v[2] * inv;
    } else {
        out[1] = T::zero();
        out[2] = T::zero();
        out[3] = T::zero();
    }
}

/// Accumulates the gradient of the embedding w.r.t. `v`, given the gradient
/// of its four outputs. Zero at the origin.
pub fn sh_embed_backward<T: Real>(v: &[T], gout: &[T], gv: &mut [T]) {
    let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if n2 <= T::min_positive_value() {
        return;
    }
    let inv = T::one() / n2.sqrt();
    let n = [v[0] * inv, v[1] * inv, v[2] * inv];
    let g = [gout[1], gout[2], gout[3]];
    let gn = g[0] * n[0] + g[1] * n[1] + g[2] * n[2];
    for c in 0..3 {
        gv[c] = gv[c] + (g[c] - gn * n[c]) * inv;
    }
}

/// `1x0e + 1x1o` embedding of a 3-vector.
pub fn sh_embed<T: Real>(v: [T; 3]) -> SteerableTensor<T> {
    let mut out = [T::zero(); 4];
    sh_embed_into(&v, &mut out);
    SteerableTensor::from_parts(&out[..1], &[[out[1], out[2], out[3]]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_direction() {
        let y = sh_embed([0.0, 0.0, 2.0]);
        assert_eq!(y.coeffs(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_vector_has_zero_l1_block() {
        let y = sh_embed([0.0f64; 3]);
        assert_eq!(y.coeffs(), &[1.0, 0.0, 0.0, 0.0]);
        let mut g = [0.0; 3];
        sh_embed_backward(&[0.0; 3], &[1.0, 1.0, 1.0, 1.0], &mut g);
        assert_eq!(g, [0.0; 3]);
    }

    #[test]
    fn backward_matches_central_differences() {
        let v = [0.3, -0.7, 1.1];
        let gout = [0.5, 0.2, -0.4, 0.9];
        let mut g = [0.0; 3];
        sh_embed_backward(&v, &gout, &mut g);
        let h = 1e-6;
        for c in 0..3 {
            let mut vp = v;
            let mut vm = v;
            vp[c] += h;
            vm[c] -= h;
            let (mut yp, mut ym) = ([0.0; 4], [0.0; 4]);
            sh_embed_into(&vp, &mut yp);
            sh_embed_into(&vm, &mut ym);
            let fd: f64 = (0..4).map(|k| gout[k] * (yp[k] - ym[k])).sum::<f64>() / (2.0 * h);
            assert!((fd - g[c]).abs() < 1e-8, "component {c}: {fd} vs {}", g[c]);
        }
    }
}
