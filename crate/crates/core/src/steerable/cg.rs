use serde::{Deserialize, Serialize};

use super::layout::{IrrepsLayout, LayoutIndex, SteerableTensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `1 x 1 -> 0` path constant: `(u . w) / sqrt(3)`.
pub const KAPPA_DOT: f64 = 0.577_350_269_189_625_8;
/// `1 x 1 -> 1` path constant: `(u x w) / sqrt(2)`.
pub const KAPPA_CROSS: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The five coupling families `l_in x l_attr -> l_out` with all degrees <= 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CgPath {
    ScalarScalar,
    ScalarVector,
    VectorScalar,
    VectorVectorScalar,
    VectorVectorVector,
}

impl CgPath {
    pub const ALL: [CgPath; 5] = [
        CgPath::ScalarScalar,
        CgPath::ScalarVector,
        CgPath::VectorScalar,
        CgPath::VectorVectorScalar,
        CgPath::VectorVectorVector,
    ];

    /// `(l_in, l_attr, l_out)`.
    pub fn degrees(self) -> (u8, u8, u8) {
        match self {
            CgPath::ScalarScalar => (0, 0, 0),
            CgPath::ScalarVector => (0, 1, 1),
            CgPath::VectorScalar => (1, 0, 1),
            CgPath::VectorVectorScalar => (1, 1, 0),
            CgPath::VectorVectorVector => (1, 1, 1),
        }
    }

    pub fn slot(self) -> usize {
        self as usize
    }

    /// Stable suffix used in parameter names, e.g. `w1x1_0`.
    pub fn tag(self) -> &'static str {
        match self {
            CgPath::ScalarScalar => "w0x0_0",
            CgPath::ScalarVector => "w0x1_1",
            CgPath::VectorScalar => "w1x0_1",
            CgPath::VectorVectorScalar => "w1x1_0",
            CgPath::VectorVectorVector => "w1x1_1",
        }
    }
}

/// Which coupling families a product uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSet {
    /// All five families; equivariant under proper rotations.
    Full,
    /// Drops `1 x 1 -> 1` (a pseudovector); equivariant under all of O(3).
    ParityPreserving,
}

/// Layout bookkeeping for one parametrized product `in x attr -> out`.
#[derive(Clone, Debug, PartialEq)]
pub struct CgKernel {
    pub fi: LayoutIndex,
    pub ai: LayoutIndex,
    pub oi: LayoutIndex,
    pub paths: PathSet,
}

impl CgKernel {
    pub fn new(input: &IrrepsLayout, attr: &IrrepsLayout, out: &IrrepsLayout, paths: PathSet) -> Self {
        Self { fi: input.index(), ai: attr.index(), oi: out.index(), paths }
    }

    pub fn is_active(&self, path: CgPath) -> bool {
        !(path == CgPath::VectorVectorVector && self.paths == PathSet::ParityPreserving)
    }

    /// `(mult_in, mult_attr, mult_out)` of a path; all zero when inactive.
    pub fn path_shape(&self, path: CgPath) -> (usize, usize, usize) {
        if !self.is_active(path) {
            return (0, 0, 0);
        }
        let pick = |idx: &LayoutIndex, l: u8| if l == 0 { idx.n0() } else { idx.n1() };
        let (li, la, lo) = path.degrees();
        (pick(&self.fi, li), pick(&self.ai, la), pick(&self.oi, lo))
    }

    pub fn path_len(&self, path: CgPath) -> usize {
        let (a, b, c) = self.path_shape(path);
        a * b * c
    }

    /// Number of `(input, attr)` channel pairs feeding an output of degree `l_out`.
    pub fn fan_in(&self, l_out: u8) -> usize {
        CgPath::ALL
            .iter()
            .filter(|p| p.degrees().2 == l_out)
            .map(|&p| {
                let (a, b, _) = self.path_shape(p);
                a * b
            })
            .sum()
    }

    fn check_weights<T>(&self, w: &[&[T]; 5]) -> Result<()> {
        for p in CgPath::ALL {
            if w[p.slot()].len() != self.path_len(p) {
                return Err(Error::Shape(format!(
                    "path {} has {} weights, expected {}",
                    p.tag(),
                    w[p.slot()].len(),
                    self.path_len(p)
                )));
            }
        }
        Ok(())
    }

    /// Writes `f (x)_W a` into `out` (overwrites).
    pub fn forward<T: Real>(&self, w: &[&[T]; 5], f: &[T], a: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        let k_dot = T::c(KAPPA_DOT);
        let k_cross = T::c(KAPPA_CROSS);
        let (fi, ai, oi) = (&self.fi, &self.ai, &self.oi);
        let (n0a, n1a, n0o, n1o) = (ai.n0(), ai.n1(), oi.n0(), oi.n1());

        if n0o > 0 {
            let w0 = w[0];
            for (i, &fs) in fi.scalars.iter().enumerate() {
                for (j, &as_) in ai.scalars.iter().enumerate() {
                    let p = f[fs] * a[as_];
                    let row = &w0[(i * n0a + j) * n0o..][..n0o];
                    for (k, &os) in oi.scalars.iter().enumerate() {
                        out[os] = out[os] + p * row[k];
                    }
                }
            }
            let w3 = w[3];
            for (i, &fv) in fi.vectors.iter().enumerate() {
                for (j, &av) in ai.vectors.iter().enumerate() {
                    let d = k_dot * (f[fv] * a[av] + f[fv + 1] * a[av + 1] + f[fv + 2] * a[av + 2]);
                    let row = &w3[(i * n1a + j) * n0o..][..n0o];
                    for (k, &os) in oi.scalars.iter().enumerate() {
                        out[os] = out[os] + d * row[k];
                    }
                }
            }
        }
        if n1o > 0 {
            let w1 = w[1];
            for (i, &fs) in fi.scalars.iter().enumerate() {
                for (j, &av) in ai.vectors.iter().enumerate() {
                    let s = f[fs];
                    let v = [s * a[av], s * a[av + 1], s * a[av + 2]];
                    let row = &w1[(i * n1a + j) * n1o..][..n1o];
                    accumulate_vectors(out, &oi.vectors, row, v);
                }
            }
            let w2 = w[2];
            for (i, &fv) in fi.vectors.iter().enumerate() {
                for (j, &as_) in ai.scalars.iter().enumerate() {
                    let s = a[as_];
                    let v = [f[fv] * s, f[fv + 1] * s, f[fv + 2] * s];
                    let row = &w2[(i * n0a + j) * n1o..][..n1o];
                    accumulate_vectors(out, &oi.vectors, row, v);
                }
            }
            if self.is_active(CgPath::VectorVectorVector) {
                let w4 = w[4];
                for (i, &fv) in fi.vectors.iter().enumerate() {
                    for (j, &av) in ai.vectors.iter().enumerate() {
                        let c = cross3(&f[fv..fv + 3], &a[av..av + 3]).map(|x| x * k_cross);
                        let row = &w4[(i * n1a + j) * n1o..][..n1o];
                        accumulate_vectors(out, &oi.vectors, row, c);
                    }
                }
            }
        }
    }

    /// Accumulates gradients of `<gout, f (x)_W a>` into the provided buffers.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Real>(
        &self,
        w: &[&[T]; 5],
        f: &[T],
        a: &[T],
        gout: &[T],
        mut gf: Option<&mut [T]>,
        mut ga: Option<&mut [T]>,
        mut gw: Option<&mut [Vec<T>; 5]>,
    ) {
        let k_dot = T::c(KAPPA_DOT);
        let k_cross = T::c(KAPPA_CROSS);
        let (fi, ai, oi) = (&self.fi, &self.ai, &self.oi);
        let (n0a, n1a, n0o, n1o) = (ai.n0(), ai.n1(), oi.n0(), oi.n1());
        let go: Vec<T> = oi.scalars.iter().map(|&o| gout[o]).collect();
        let gq: Vec<[T; 3]> = oi.vectors.iter().map(|&o| [gout[o], gout[o + 1], gout[o + 2]]).collect();

        if n0o > 0 {
            // 0 x 0 -> 0
            for (i, &fs) in fi.scalars.iter().enumerate() {
                for (j, &as_) in ai.scalars.iter().enumerate() {
                    let base = (i * n0a + j) * n0o;
                    let row = &w[0][base..base + n0o];
                    let wg: T = row.iter().zip(&go).map(|(&x, &g)| x * g).sum();
                    if let Some(gf) = gf.as_deref_mut() {
                        gf[fs] = gf[fs] + a[as_] * wg;
                    }
                    if let Some(ga) = ga.as_deref_mut() {
                        ga[as_] = ga[as_] + f[fs] * wg;
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        let p = f[fs] * a[as_];
                        for (x, &g) in gw[0][base..base + n0o].iter_mut().zip(&go) {
                            *x = *x + p * g;
                        }
                    }
                }
            }
            // 1 x 1 -> 0
            for (i, &fv) in fi.vectors.iter().enumerate() {
                for (j, &av) in ai.vectors.iter().enumerate() {
                    let base = (i * n1a + j) * n0o;
                    let row = &w[3][base..base + n0o];
                    let wg: T = k_dot * row.iter().zip(&go).map(|(&x, &g)| x * g).sum();
                    if let Some(gf) = gf.as_deref_mut() {
                        for c in 0..3 {
                            gf[fv + c] = gf[fv + c] + a[av + c] * wg;
                        }
                    }
                    if let Some(ga) = ga.as_deref_mut() {
                        for c in 0..3 {
                            ga[av + c] = ga[av + c] + f[fv + c] * wg;
                        }
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        let d = k_dot * (f[fv] * a[av] + f[fv + 1] * a[av + 1] + f[fv + 2] * a[av + 2]);
                        for (x, &g) in gw[3][base..base + n0o].iter_mut().zip(&go) {
                            *x = *x + d * g;
                        }
                    }
                }
            }
        }
        if n1o > 0 {
            // 0 x 1 -> 1
            for (i, &fs) in fi.scalars.iter().enumerate() {
                for (j, &av) in ai.vectors.iter().enumerate() {
                    let base = (i * n1a + j) * n1o;
                    let row = &w[1][base..base + n1o];
                    let wg = weighted_vector(row, &gq);
                    let beta = [a[av], a[av + 1], a[av + 2]];
                    if let Some(gf) = gf.as_deref_mut() {
                        gf[fs] = gf[fs] + dot3(wg, beta);
                    }
                    if let Some(ga) = ga.as_deref_mut() {
                        for c in 0..3 {
                            ga[av + c] = ga[av + c] + f[fs] * wg[c];
                        }
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        for (x, g) in gw[1][base..base + n1o].iter_mut().zip(&gq) {
                            *x = *x + f[fs] * dot3(beta, *g);
                        }
                    }
                }
            }
            // 1 x 0 -> 1
            for (i, &fv) in fi.vectors.iter().enumerate() {
                for (j, &as_) in ai.scalars.iter().enumerate() {
                    let base = (i * n0a + j) * n1o;
                    let row = &w[2][base..base + n1o];
                    let wg = weighted_vector(row, &gq);
                    let u = [f[fv], f[fv + 1], f[fv + 2]];
                    if let Some(gf) = gf.as_deref_mut() {
                        for c in 0..3 {
                            gf[fv + c] = gf[fv + c] + a[as_] * wg[c];
                        }
                    }
                    if let Some(ga) = ga.as_deref_mut() {
                        ga[as_] = ga[as_] + dot3(u, wg);
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        for (x, g) in gw[2][base..base + n1o].iter_mut().zip(&gq) {
                            *x = *x + a[as_] * dot3(u, *g);
                        }
                    }
                }
            }
            // 1 x 1 -> 1
            if self.is_active(CgPath::VectorVectorVector) {
                for (i, &fv) in fi.vectors.iter().enumerate() {
                    for (j, &av) in ai.vectors.iter().enumerate() {
                        let base = (i * n1a + j) * n1o;
                        let row = &w[4][base..base + n1o];
                        let wg = weighted_vector(row, &gq).map(|x| x * k_cross);
                        let u = [f[fv], f[fv + 1], f[fv + 2]];
                        let beta = [a[av], a[av + 1], a[av + 2]];
                        // g . (u x b) = u . (b x g) = b . (g x u)
                        if let Some(gf) = gf.as_deref_mut() {
                            let d = cross3(&beta, &wg);
                            for c in 0..3 {
                                gf[fv + c] = gf[fv + c] + d[c];
                            }
                        }
                        if let Some(ga) = ga.as_deref_mut() {
                            let d = cross3(&wg, &u);
                            for c in 0..3 {
                                ga[av + c] = ga[av + c] + d[c];
                            }
                        }
                        if let Some(gw) = gw.as_deref_mut() {
                            let c = cross3(&u, &beta).map(|x| x * k_cross);
                            for (x, g) in gw[4][base..base + n1o].iter_mut().zip(&gq) {
                                *x = *x + dot3(c, *g);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross3<T: Real>(a: &[T], b: &[T]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn accumulate_vectors<T: Real>(out: &mut [T], offsets: &[usize], row: &[T], v: [T; 3]) {
    for (&o, &wk) in offsets.iter().zip(row) {
        out[o] = out[o] + wk * v[0];
        out[o + 1] = out[o + 1] + wk * v[1];
        out[o + 2] = out[o + 2] + wk * v[2];
    }
}

#[inline]
fn weighted_vector<T: Real>(row: &[T], gq: &[[T; 3]]) -> [T; 3] {
    let mut acc = [T::zero(); 3];
    for (&wk, g) in row.iter().zip(gq) {
        acc[0] = acc[0] + wk * g[0];
        acc[1] = acc[1] + wk * g[1];
        acc[2] = acc[2] + wk * g[2];
    }
    acc
}

/// Learnable weights of one product, one array per path shaped
/// `(mult_in, mult_attr, mult_out)` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct CgWeights<T> {
    input: IrrepsLayout,
    attr: IrrepsLayout,
    output: IrrepsLayout,
    kernel: CgKernel,
    weights: [Vec<T>; 5],
}

impl<T: Real> CgWeights<T> {
    pub fn zeros(input: IrrepsLayout, attr: IrrepsLayout, output: IrrepsLayout, paths: PathSet) -> Self {
        let kernel = CgKernel::new(&input, &attr, &output, paths);
        let weights = CgPath::ALL.map(|p| vec![T::zero(); kernel.path_len(p)]);
        Self { input, attr, output, kernel, weights }
    }

    pub fn input(&self) -> &IrrepsLayout {
        &self.input
    }

    pub fn attr(&self) -> &IrrepsLayout {
        &self.attr
    }

    pub fn output(&self) -> &IrrepsLayout {
        &self.output
    }

    pub fn kernel(&self) -> &CgKernel {
        &self.kernel
    }

    pub fn path(&self, p: CgPath) -> &[T] {
        &self.weights[p.slot()]
    }

    pub fn path_mut(&mut self, p: CgPath) -> &mut [T] {
        &mut self.weights[p.slot()]
    }

    pub fn set(&mut self, p: CgPath, i: usize, j: usize, k: usize, value: T) {
        let (_, na, no) = self.kernel.path_shape(p);
        self.weights[p.slot()][(i * na + j) * no + k] = value;
    }

    pub fn slices(&self) -> [&[T]; 5] {
        [
            &self.weights[0],
            &self.weights[1],
            &self.weights[2],
            &self.weights[3],
            &self.weights[4],
        ]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }
}

/// Parametrized Clebsch-Gordan product `f (x)_W a` with output `out_layout`.
pub fn cg_product<T: Real>(
    f: &SteerableTensor<T>,
    a: &SteerableTensor<T>,
    w: &CgWeights<T>,
    out_layout: &IrrepsLayout,
) -> Result<SteerableTensor<T>> {
    if f.layout() != w.input() || a.layout() != w.attr() || out_layout != w.output() {
        return Err(Error::Layout(format!(
            "weights expect {} x {} -> {}, got {} x {} -> {}",
            w.input(),
            w.attr(),
            w.output(),
            f.layout(),
            a.layout(),
            out_layout
        )));
    }
    let slices = w.slices();
    w.kernel.check_weights(&slices)?;
    let mut out = SteerableTensor::zeros(out_layout.clone());
    w.kernel.forward(&slices, f.coeffs(), a.coeffs(), out.coeffs_mut());
    Ok(out)
}

/// Batched forward over `rows` rows of `f` and `a`.
pub fn cg_forward<T: Real>(kernel: &CgKernel, w: &[&[T]; 5], f: &[T], a: &[T], out: &mut [T]) -> Result<()> {
    kernel.check_weights(w)?;
    let (df, da, dout) = (kernel.fi.dim, kernel.ai.dim, kernel.oi.dim);
    let rows = if dout > 0 { out.len() / dout } else { 0 };
    if f.len() != rows * df || a.len() != rows * da {
        return Err(Error::Shape(format!(
            "cg_forward: {} rows but input lengths {} / {}",
            rows,
            f.len(),
            a.len()
        )));
    }
    crate::par::for_each_row(out, dout, |r, row| {
        kernel.forward(w, &f[r * df..(r + 1) * df], &a[r * da..(r + 1) * da], row);
    });
    Ok(())
}

/// Batched backward: accumulates input/attribute gradients row-wise and the
/// weight gradient with an ordered block reduction.
#[allow(clippy::too_many_arguments)]
pub fn cg_backward<T: Real>(
    kernel: &CgKernel,
    w: &[&[T]; 5],
    f: &[T],
    a: &[T],
    gout: &[T],
    gf: Option<&mut [T]>,
    ga: Option<&mut [T]>,
    want_w: bool,
) -> Option<[Vec<T>; 5]> {
    let (df, da, dout) = (kernel.fi.dim, kernel.ai.dim, kernel.oi.dim);
    let rows = if dout > 0 { gout.len() / dout } else { 0 };
    if let Some(gf) = gf {
        crate::par::for_each_row(gf, df, |r, row| {
            kernel.backward(w, &f[r * df..][..df], &a[r * da..][..da], &gout[r * dout..][..dout], Some(row), None, None);
        });
    }
    if let Some(ga) = ga {
        crate::par::for_each_row(ga, da, |r, row| {
            kernel.backward(w, &f[r * df..][..df], &a[r * da..][..da], &gout[r * dout..][..dout], None, Some(row), None);
        });
    }
    if !want_w {
        return None;
    }
    let zero = || CgPath::ALL.map(|p| vec![T::zero(); kernel.path_len(p)]);
    let total = crate::par::reduce_blocks(
        rows,
        |range| {
            let mut acc = zero();
            for r in range {
                kernel.backward(w, &f[r * df..][..df], &a[r * da..][..da], &gout[r * dout..][..dout], None, None, Some(&mut acc));
            }
            acc
        },
        |mut x, y| {
            for (xs, ys) in x.iter_mut().zip(y.iter()) {
                for (p, q) in xs.iter_mut().zip(ys) {
                    *p = *p + *q;
                }
            }
            x
        },
    );
    Some(total.unwrap_or_else(zero))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> SteerableTensor<f64> {
        SteerableTensor::from_parts(&[x], &[])
    }

    fn vector(v: [f64; 3]) -> SteerableTensor<f64> {
        SteerableTensor::from_parts(&[], &[v])
    }

    #[test]
    fn scalar_path_multiplies() {
        let l0 = IrrepsLayout::scalars_vectors(1, 0);
        let mut w = CgWeights::zeros(l0.clone(), l0.clone(), l0.clone(), PathSet::Full);
        w.set(CgPath::ScalarScalar, 0, 0, 0, 1.0);
        let out = cg_product(&scalar(2.0), &scalar(3.0), &w, &l0).unwrap();
        assert_eq!(out.coeffs(), &[6.0]);
    }

    #[test]
    fn vector_paths_are_dot_and_cross() {
        let l1 = IrrepsLayout::scalars_vectors(0, 1);
        let l0 = IrrepsLayout::scalars_vectors(1, 0);
        let mut w = CgWeights::zeros(l1.clone(), l1.clone(), l1.clone(), PathSet::Full);
        w.set(CgPath::VectorVectorVector, 0, 0, 0, 1.0);
        let out = cg_product(&vector([1.0, 0.0, 0.0]), &vector([0.0, 1.0, 0.0]), &w, &l1).unwrap();
        assert!((out.coeffs()[2] - KAPPA_CROSS).abs() < 1e-15);
        assert_eq!(&out.coeffs()[..2], &[0.0, 0.0]);

        let mut w = CgWeights::zeros(l1.clone(), l1.clone(), l0.clone(), PathSet::Full);
        w.set(CgPath::VectorVectorScalar, 0, 0, 0, 1.0);
        let out = cg_product(&vector([1.0, 0.0, 0.0]), &vector([1.0, 0.0, 0.0]), &w, &l0).unwrap();
        assert!((out.coeffs()[0] - KAPPA_DOT).abs() < 1e-15);
        assert!((KAPPA_DOT - 1.0 / 3f64.sqrt()).abs() < 1e-16);
    }

    #[test]
    fn parity_preserving_has_no_cross_weights() {
        let l = IrrepsLayout::scalars_vectors(2, 3);
        let w = CgWeights::<f64>::zeros(l.clone(), IrrepsLayout::sh1(), l, PathSet::ParityPreserving);
        assert!(w.path(CgPath::VectorVectorVector).is_empty());
        assert_eq!(w.num_params(), 2 * 2 + 2 * 3 + 3 * 3 + 3 * 2);
    }

    #[test]
    fn rejects_mismatched_layouts() {
        let l0 = IrrepsLayout::scalars_vectors(1, 0);
        let l1 = IrrepsLayout::scalars_vectors(0, 1);
        let w = CgWeights::<f64>::zeros(l0.clone(), l0.clone(), l0.clone(), PathSet::Full);
        assert!(cg_product(&vector([1.0, 0.0, 0.0]), &scalar(1.0), &w, &l0).is_err());
        assert!(cg_product(&scalar(1.0), &scalar(1.0), &w, &l1).is_err());
    }
}
