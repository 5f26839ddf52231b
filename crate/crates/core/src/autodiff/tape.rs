use std::sync::Arc;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::par;
use crate::scalar::Real;
use crate::steerable::{
    gate_backward, gate_forward, sh_embed_backward, sh_embed_into, silu, silu_grad, CgKernel, GateSpec,
};

/// Handle to a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// An index array `idx[e] in 0..targets` together with its stable grouping
/// by target, so that scatter-sums run per target in edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct RowGroups {
    idx: Vec<usize>,
    targets: usize,
    offsets: Vec<usize>,
    order: Vec<usize>,
}

impl RowGroups {
    pub fn new(idx: Vec<usize>, targets: usize) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= targets) {
            return Err(Error::Index(format!("row index {bad} >= {targets}")));
        }
        let mut offsets = vec![0usize; targets + 1];
        for &i in &idx {
            offsets[i + 1] += 1;
        }
        for t in 0..targets {
            offsets[t + 1] += offsets[t];
        }
        let mut fill = offsets.clone();
        let mut order = vec![0usize; idx.len()];
        for (e, &i) in idx.iter().enumerate() {
            order[fill[i]] = e;
            fill[i] += 1;
        }
        Ok(Self { idx, targets, offsets, order })
    }

    pub fn idx(&self) -> &[usize] {
        &self.idx
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    fn members(&self, t: usize) -> &[usize] {
        &self.order[self.offsets[t]..self.offsets[t + 1]]
    }
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    AddCols { x: Var, b: Var, cols: Arc<Vec<usize>> },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    ScaleBy { x: Var, w: Var, k: usize },
    Silu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Concat(Vec<Var>),
    Gather { x: Var, groups: Arc<RowGroups> },
    Scatter { x: Var, groups: Arc<RowGroups> },
    Cg { f: Var, a: Var, w: [Var; 5], kernel: Arc<CgKernel> },
    Gate { x: Var, scalars: Arc<Vec<usize>>, vectors: Arc<Vec<usize>>, spec: GateSpec },
    ShEmbed(Var),
    Mse { pred: Var, target: Tensor<T> },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::AddCols { .. } => "add_cols",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::ScaleBy { .. } => "scale_by",
            Op::Silu(_) => "silu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Concat(_) => "concat",
            Op::Gather { .. } => "gather",
            Op::Scatter { .. } => "scatter_sum",
            Op::Cg { .. } => "cg",
            Op::Gate { .. } => "gate",
            Op::ShEmbed(_) => "sh_embed",
            Op::Mse { .. } => "mse",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records primitives and replays them backwards.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
    fault: Option<(&'static str, T)>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grad_enabled: true, fault: None }
    }

    /// A tape whose parameters are treated as constants.
    pub fn no_grad() -> Self {
        Self { nodes: Vec::new(), grad_enabled: false, fault: None }
    }

    /// Test fixture: scales the gradient flowing into every primitive named
    /// `op` (see [`Tape::op_name`]) by `factor` during [`Tape::backward`],
    /// i.e. deliberately breaks that primitive's backward rule.
    pub fn inject_backward_fault(&mut self, op: &'static str, factor: T) {
        self.fault = Some((op, factor));
    }

    /// Name of the primitive that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows, t.cols)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param(_) => self.grad_enabled,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, cond: bool, what: impl FnOnce() -> String) -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(Error::Shape(what()))
        }
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), &[])
    }

    pub fn param_named(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        Ok(self.param(store, store.id(name)?))
    }

    /// `x [R, I] . w [I, O]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        self.check(xv.cols == wv.rows, || format!("matmul {}x{} . {}x{}", xv.rows, xv.cols, wv.rows, wv.cols))?;
        let (rows, inner, cols) = (xv.rows, xv.cols, wv.cols);
        let mut out = Tensor::zeros(rows, cols);
        par::for_each_row(&mut out.data, cols, |r, row| {
            let xr = &xv.data[r * inner..(r + 1) * inner];
            for (i, &xi) in xr.iter().enumerate() {
                if xi == T::zero() {
                    continue;
                }
                let wr = &wv.data[i * cols..(i + 1) * cols];
                for (o, &wio) in row.iter_mut().zip(wr) {
                    *o = *o + xi * wio;
                }
            }
        });
        Ok(self.push(out, Op::MatMul(x, w), &[x, w]))
    }

    /// `x + b` with `b` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        self.check(bv.len() == xv.cols, || format!("bias of {} for {} columns", bv.len(), xv.cols))?;
        let mut out = xv.clone();
        let cols = xv.cols;
        par::for_each_row(&mut out.data, cols, |_, row| {
            for (o, &bi) in row.iter_mut().zip(&bv.data) {
                *o = *o + bi;
            }
        });
        Ok(self.push(out, Op::AddRow(x, b), &[x, b]))
    }

    /// Adds `b[k]` to column `cols[k]` of every row.
    pub fn add_cols(&mut self, x: Var, b: Var, cols: Arc<Vec<usize>>) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        self.check(bv.len() == cols.len() && cols.iter().all(|&c| c < xv.cols), || {
            format!("column bias of {} for {} target columns", bv.len(), cols.len())
        })?;
        let mut out = xv.clone();
        let width = xv.cols;
        par::for_each_row(&mut out.data, width, |_, row| {
            for (&c, &bi) in cols.iter().zip(&bv.data) {
                row[c] = row[c] + bi;
            }
        });
        Ok(self.push(out, Op::AddCols { x, b, cols }, &[x, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        self.check((av.rows, av.cols) == (bv.rows, bv.cols), || "add: shape mismatch".into())?;
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| x + y).collect();
        let out = Tensor { rows: av.rows, cols: av.cols, data };
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        self.check((av.rows, av.cols) == (bv.rows, bv.cols), || "sub: shape mismatch".into())?;
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| x - y).collect();
        let out = Tensor { rows: av.rows, cols: av.cols, data };
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let xv = self.value(x);
        let out = Tensor { rows: xv.rows, cols: xv.cols, data: xv.data.iter().map(|&v| v * s).collect() };
        self.push(out, Op::Scale(x, s), &[x])
    }

    /// `x * w[k]` for a scalar entry of `w`.
    pub fn scale_by(&mut self, x: Var, w: Var, k: usize) -> Result<Var> {
        let wv = self.value(w);
        self.check(k < wv.len(), || format!("scale_by index {k} of {}", wv.len()))?;
        let s = wv.data[k];
        let xv = self.value(x);
        let out = Tensor { rows: xv.rows, cols: xv.cols, data: xv.data.iter().map(|&v| v * s).collect() };
        Ok(self.push(out, Op::ScaleBy { x, w, k }, &[x, w]))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = xv.clone();
        let cols = xv.cols.max(1);
        par::for_each_row(&mut out.data, cols, |_, row| row.iter_mut().for_each(|v| *v = silu(*v)));
        self.push(out, Op::Silu(x), &[x])
    }

    /// Row-wise layer normalization with learnable scale and offset.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        self.check(gv.len() == xv.cols && bv.len() == xv.cols, || "layer_norm: parameter width".into())?;
        let cols = xv.cols;
        let eps = T::c(1e-6);
        let n = T::c(cols as f64);
        let stats: Vec<(Vec<T>, T)> = par::map_range(xv.rows, |r| {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            (row.iter().map(|&v| (v - mean) * inv).collect(), inv)
        });
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(xv.rows);
        for (h, inv) in stats {
            xhat.extend(h);
            inv_std.push(inv);
        }
        let mut out = Tensor::zeros(xv.rows, cols);
        for (r, row) in out.data.chunks_mut(cols.max(1)).enumerate() {
            for c in 0..cols {
                row[c] = gv.data[c] * xhat[r * cols + c] + bv.data[c];
            }
        }
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta]))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows;
        self.check(parts.iter().all(|&p| self.value(p).rows == rows), || "concat: row mismatch".into())?;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = r * cols;
            for &p in parts {
                let src = self.value(p).row(r);
                out.data[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts))
    }

    /// `out[e] = x[idx[e]]`.
    pub fn gather(&mut self, x: Var, groups: Arc<RowGroups>) -> Result<Var> {
        let xv = self.value(x);
        self.check(xv.rows == groups.targets, || format!("gather from {} rows with {} targets", xv.rows, groups.targets))?;
        let cols = xv.cols;
        let mut out = Tensor::zeros(groups.idx.len(), cols);
        par::for_each_row(&mut out.data, cols, |e, row| row.copy_from_slice(xv.row(groups.idx[e])));
        Ok(self.push(out, Op::Gather { x, groups }, &[x]))
    }

    /// `out[t] = sum_{e : idx[e] = t} x[e]`, summed in increasing `e`.
    pub fn scatter_sum(&mut self, x: Var, groups: Arc<RowGroups>) -> Result<Var> {
        let xv = self.value(x);
        self.check(xv.rows == groups.idx.len(), || format!("scatter of {} rows with {} indices", xv.rows, groups.idx.len()))?;
        let cols = xv.cols;
        let mut out = Tensor::zeros(groups.targets, cols);
        par::for_each_row(&mut out.data, cols, |t, row| {
            for &e in groups.members(t) {
                for (o, &v) in row.iter_mut().zip(xv.row(e)) {
                    *o = *o + v;
                }
            }
        });
        Ok(self.push(out, Op::Scatter { x, groups }, &[x]))
    }

    /// Row-wise Clebsch-Gordan product; `w` holds the five path weights.
    pub fn cg(&mut self, f: Var, a: Var, w: [Var; 5], kernel: Arc<CgKernel>) -> Result<Var> {
        let (fv, av) = (self.value(f), self.value(a));
        self.check(fv.cols == kernel.fi.dim && av.cols == kernel.ai.dim && fv.rows == av.rows, || {
            format!("cg: inputs {}x{} and {}x{} for dims {} / {}", fv.rows, fv.cols, av.rows, av.cols, kernel.fi.dim, kernel.ai.dim)
        })?;
        let ws: [&[T]; 5] = [0, 1, 2, 3, 4].map(|k| self.value(w[k]).data.as_slice());
        let mut out = Tensor::zeros(fv.rows, kernel.oi.dim);
        crate::steerable::cg_forward(&kernel, &ws, &fv.data, &av.data, &mut out.data)?;
        let mut inputs = vec![f, a];
        inputs.extend_from_slice(&w);
        Ok(self.push(out, Op::Cg { f, a, w, kernel }, &inputs))
    }

    /// Gated nonlinearity on rows laid out as `layout_index`.
    pub fn gate(&mut self, x: Var, scalars: Arc<Vec<usize>>, vectors: Arc<Vec<usize>>, spec: GateSpec) -> Result<Var> {
        let xv = self.value(x);
        self.check(scalars.len() == spec.pass + spec.vectors && vectors.len() == spec.vectors, || "gate: layout".into())?;
        let in_cols = xv.cols;
        let out_cols = spec.pass + 3 * spec.vectors;
        let mut out = Tensor::zeros(xv.rows, out_cols);
        par::for_each_row(&mut out.data, out_cols, |r, row| {
            gate_forward(&scalars, &vectors, spec, &xv.data[r * in_cols..(r + 1) * in_cols], row)
        });
        Ok(self.push(out, Op::Gate { x, scalars, vectors, spec }, &[x]))
    }

    /// Rows of 3-vectors to rows of `[1, v/|v|]`.
    pub fn sh_embed(&mut self, v: Var) -> Result<Var> {
        let vv = self.value(v);
        self.check(vv.cols == 3, || format!("sh_embed expects 3 columns, got {}", vv.cols))?;
        let mut out = Tensor::zeros(vv.rows, 4);
        par::for_each_row(&mut out.data, 4, |r, row| sh_embed_into(vv.row(r), row));
        Ok(self.push(out, Op::ShEmbed(v), &[v]))
    }

    /// Mean over all entries of `(pred - target)^2`.
    pub fn mse(&mut self, pred: Var, target: Tensor<T>) -> Result<Var> {
        let pv = self.value(pred);
        self.check(pv.rows == target.rows && pv.cols == target.cols, || "mse: shape mismatch".into())?;
        let n = T::c(pv.len().max(1) as f64);
        let sum = par::reduce_blocks(
            pv.len(),
            |r| r.map(|i| (pv.data[i] - target.data[i]) * (pv.data[i] - target.data[i])).sum::<T>(),
            |a, b| a + b,
        )
        .unwrap_or_else(T::zero);
        Ok(self.push(Tensor::scalar(sum / n), Op::Mse { pred, target }, &[pred]))
    }

    /// Reverse sweep from a scalar `loss`; returns gradients aligned with `store`.
    pub fn backward(&self, loss: Var, store: &ParamStore<T>) -> Result<Grads<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Shape(format!("backward needs a scalar loss, got {}x{}", lv.rows, lv.cols)));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut out = store.zeros_like();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(mut g) = grads[idx].take() else { continue };
            if let Some((op, factor)) = self.fault {
                if node.op.name() == op {
                    g.data.iter_mut().for_each(|x| *x = *x * factor);
                }
            }
            let ng = |v: &Var| self.nodes[v.0].needs_grad;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.tensors[id.0].add_assign(&g),
                Op::MatMul(x, w) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (rows, inner, cols) = (xv.rows, xv.cols, wv.cols);
                    if ng(x) {
                        let mut gx = Tensor::zeros(rows, inner);
                        par::for_each_row(&mut gx.data, inner, |r, row| {
                            let gr = &g.data[r * cols..(r + 1) * cols];
                            for (i, o) in row.iter_mut().enumerate() {
                                let wr = &wv.data[i * cols..(i + 1) * cols];
                                *o = gr.iter().zip(wr).map(|(&a, &b)| a * b).sum();
                            }
                        });
                        accumulate(&mut grads, *x, gx);
                    }
                    if ng(w) {
                        let mut gw = Tensor::zeros(inner, cols);
                        par::for_each_row(&mut gw.data, cols, |i, row| {
                            for r in 0..rows {
                                let xi = xv.data[r * inner + i];
                                if xi == T::zero() {
                                    continue;
                                }
                                let gr = &g.data[r * cols..(r + 1) * cols];
                                for (o, &gv) in row.iter_mut().zip(gr) {
                                    *o = *o + xi * gv;
                                }
                            }
                        });
                        accumulate(&mut grads, *w, gw);
                    }
                }
                Op::AddRow(x, b) => {
                    if ng(b) {
                        let gb = column_sums(&g);
                        accumulate(&mut grads, *b, Tensor { rows: self.value(*b).rows, cols: self.value(*b).cols, data: gb });
                    }
                    if ng(x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::AddCols { x, b, cols } => {
                    if ng(b) {
                        let sums = column_sums(&g);
                        let data = cols.iter().map(|&c| sums[c]).collect();
                        let bv = self.value(*b);
                        accumulate(&mut grads, *b, Tensor { rows: bv.rows, cols: bv.cols, data });
                    }
                    if ng(x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Add(a, b) => {
                    if ng(a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if ng(b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if ng(b) {
                        let neg = Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().map(|&v| -v).collect() };
                        accumulate(&mut grads, *b, neg);
                    }
                    if ng(a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Scale(x, s) => {
                    let gx = Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().map(|&v| v * *s).collect() };
                    accumulate(&mut grads, *x, gx);
                }
                Op::ScaleBy { x, w, k } => {
                    let xv = self.value(*x);
                    if ng(w) {
                        let dot = par::reduce_blocks(g.len(), |r| r.map(|i| g.data[i] * xv.data[i]).sum::<T>(), |a, b| a + b)
                            .unwrap_or_else(T::zero);
                        let wv = self.value(*w);
                        let mut gw = Tensor::zeros(wv.rows, wv.cols);
                        gw.data[*k] = dot;
                        accumulate(&mut grads, *w, gw);
                    }
                    if ng(x) {
                        let s = self.value(*w).data[*k];
                        let gx = Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().map(|&v| v * s).collect() };
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Silu(x) => {
                    let xv = self.value(*x);
                    let data = g.data.iter().zip(&xv.data).map(|(&gv, &v)| gv * silu_grad(v)).collect();
                    accumulate(&mut grads, *x, Tensor { rows: g.rows, cols: g.cols, data });
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let cols = g.cols;
                    let gv = self.value(*gamma);
                    if ng(gamma) {
                        let mut gg = vec![T::zero(); cols];
                        for r in 0..g.rows {
                            for c in 0..cols {
                                gg[c] = gg[c] + g.data[r * cols + c] * xhat[r * cols + c];
                            }
                        }
                        accumulate(&mut grads, *gamma, Tensor { rows: gv.rows, cols: gv.cols, data: gg });
                    }
                    if ng(beta) {
                        let bv = self.value(*beta);
                        accumulate(&mut grads, *beta, Tensor { rows: bv.rows, cols: bv.cols, data: column_sums(&g) });
                    }
                    if ng(x) {
                        let n = T::c(cols as f64);
                        let mut gx = Tensor::zeros(g.rows, cols);
                        par::for_each_row(&mut gx.data, cols, |r, row| {
                            let gr = &g.data[r * cols..(r + 1) * cols];
                            let hr = &xhat[r * cols..(r + 1) * cols];
                            let gh: Vec<T> = gr.iter().zip(&gv.data).map(|(&a, &b)| a * b).collect();
                            let mean_gh = gh.iter().copied().sum::<T>() / n;
                            let mean_ghh = gh.iter().zip(hr).map(|(&a, &b)| a * b).sum::<T>() / n;
                            for c in 0..cols {
                                row[c] = inv_std[r] * (gh[c] - mean_gh - hr[c] * mean_ghh);
                            }
                        });
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let pc = self.value(*p).cols;
                        if ng(p) {
                            let mut gp = Tensor::zeros(g.rows, pc);
                            for r in 0..g.rows {
                                gp.row_mut(r).copy_from_slice(&g.data[r * g.cols + off..r * g.cols + off + pc]);
                            }
                            accumulate(&mut grads, *p, gp);
                        }
                        off += pc;
                    }
                }
                Op::Gather { x, groups } => {
                    let cols = g.cols;
                    let mut gx = Tensor::zeros(groups.targets, cols);
                    par::for_each_row(&mut gx.data, cols, |t, row| {
                        for &e in groups.members(t) {
                            for (o, &v) in row.iter_mut().zip(g.row(e)) {
                                *o = *o + v;
                            }
                        }
                    });
                    accumulate(&mut grads, *x, gx);
                }
                Op::Scatter { x, groups } => {
                    let cols = g.cols;
                    let mut gx = Tensor::zeros(groups.idx.len(), cols);
                    par::for_each_row(&mut gx.data, cols, |e, row| row.copy_from_slice(g.row(groups.idx[e])));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Cg { f, a, w, kernel } => {
                    let (fv, av) = (self.value(*f), self.value(*a));
                    let ws: [&[T]; 5] = [0, 1, 2, 3, 4].map(|k| self.value(w[k]).data.as_slice());
                    let mut gf = ng(f).then(|| Tensor::zeros(fv.rows, fv.cols));
                    let mut ga = ng(a).then(|| Tensor::zeros(av.rows, av.cols));
                    let want_w = w.iter().any(ng);
                    let gw = crate::steerable::cg_backward(
                        kernel,
                        &ws,
                        &fv.data,
                        &av.data,
                        &g.data,
                        gf.as_mut().map(|t| t.data.as_mut_slice()),
                        ga.as_mut().map(|t| t.data.as_mut_slice()),
                        want_w,
                    );
                    if let Some(gf) = gf {
                        accumulate(&mut grads, *f, gf);
                    }
                    if let Some(ga) = ga {
                        accumulate(&mut grads, *a, ga);
                    }
                    if let Some(gw) = gw {
                        for (k, data) in gw.into_iter().enumerate() {
                            if ng(&w[k]) {
                                let wv = self.value(w[k]);
                                accumulate(&mut grads, w[k], Tensor { rows: wv.rows, cols: wv.cols, data });
                            }
                        }
                    }
                }
                Op::Gate { x, scalars, vectors, spec } => {
                    let xv = self.value(*x);
                    let (in_cols, out_cols) = (xv.cols, g.cols);
                    let mut gx = Tensor::zeros(xv.rows, in_cols);
                    par::for_each_row(&mut gx.data, in_cols, |r, row| {
                        gate_backward(scalars, vectors, *spec, xv.row(r), &g.data[r * out_cols..(r + 1) * out_cols], row)
                    });
                    accumulate(&mut grads, *x, gx);
                }
                Op::ShEmbed(v) => {
                    let vv = self.value(*v);
                    let mut gv = Tensor::zeros(vv.rows, 3);
                    par::for_each_row(&mut gv.data, 3, |r, row| sh_embed_backward(vv.row(r), g.row(r), row));
                    accumulate(&mut grads, *v, gv);
                }
                Op::Mse { pred, target } => {
                    let pv = self.value(*pred);
                    let scale = g.item() * T::c(2.0) / T::c(pv.len().max(1) as f64);
                    let data = pv.data.iter().zip(&target.data).map(|(&p, &t)| scale * (p - t)).collect();
                    accumulate(&mut grads, *pred, Tensor { rows: pv.rows, cols: pv.cols, data });
                }
            }
        }
        Ok(out)
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums<T: Real>(g: &Tensor<T>) -> Vec<T> {
    let cols = g.cols;
    par::map_range(cols, |c| (0..g.rows).map(|r| g.data[r * cols + c]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::scalar(3.0f64));
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let loss = tape.mse(xv, Tensor::scalar(0.0)).unwrap();
        assert_eq!(tape.value(loss).item(), 9.0);
        let g = tape.backward(loss, &store).unwrap();
        assert_eq!(g.get(x).item(), 6.0);
    }

    #[test]
    fn unused_parameter_has_exact_zero_gradient() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Tensor::new(1, 2, vec![1.0f64, 2.0]).unwrap());
        let b = store.insert("b", Tensor::new(1, 2, vec![5.0, 6.0]).unwrap());
        let mut tape = Tape::new();
        let av = tape.param(&store, a);
        let _bv = tape.param(&store, b);
        let loss = tape.mse(av, Tensor::zeros(1, 2)).unwrap();
        let g = tape.backward(loss, &store).unwrap();
        assert!(g.get(b).data.iter().all(|&v| v == 0.0));
        assert_eq!(g.get(a).data, vec![1.0, 2.0]);
    }

    #[test]
    fn scatter_sums_groups_in_order() {
        let groups = Arc::new(RowGroups::new(vec![1, 0, 1, 1], 2).unwrap());
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let s = tape.scatter_sum(x, groups.clone()).unwrap();
        assert_eq!(tape.value(s).data, vec![2.0, 8.0]);
        let y = tape.gather(s, groups).unwrap();
        assert_eq!(tape.value(y).data, vec![8.0, 2.0, 8.0, 8.0]);
        assert!(RowGroups::new(vec![3], 2).is_err());
    }

    #[test]
    fn no_grad_tape_yields_zero_gradients() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::scalar(2.0f64));
        let mut tape = Tape::no_grad();
        let xv = tape.param(&store, x);
        let loss = tape.mse(xv, Tensor::scalar(0.0)).unwrap();
        assert_eq!(tape.backward(loss, &store).unwrap().get(x).item(), 0.0);
    }
}
