use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Real;
use crate::steerable::{CgKernel, CgPath, GateSpec, IrrepsLayout, PathSet};

/// Samples `rows x cols` entries from `N(mean, std)`.
pub fn normal_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, mean: f64, std: f64) -> Tensor<f64> {
    let dist = Normal::new(mean, std).expect("finite standard deviation");
    Tensor { rows, cols, data: (0..rows * cols).map(|_| dist.sample(rng)).collect() }
}

/// Shifted initialization: `N(1 / n_weights, 1 / sqrt(fan_in))`, so that at
/// initialization a weighted sum over `n_weights` items resembles their mean.
pub fn shifted_init<R: Rng>(rng: &mut R, rows: usize, cols: usize, n_weights: usize, fan_in: usize) -> Tensor<f64> {
    normal_tensor(rng, rows, cols, 1.0 / n_weights as f64, 1.0 / (fan_in.max(1) as f64).sqrt())
}

/// Affine map `x W + b`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParamStore<f64>, rng: &mut R, prefix: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = store.insert(format!("{prefix}.w"), normal_tensor(rng, fan_in, fan_out, 0.0, 1.0 / (fan_in as f64).sqrt()));
        let b = store.insert(format!("{prefix}.b"), Tensor::zeros(1, fan_out));
        Self { w, b }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let h = tape.matmul(x, w)?;
        tape.add_row(h, b)
    }
}

/// Dense layers with SiLU between them and optional layer norm at the end.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub norm: Option<(ParamId, ParamId)>,
}

impl Mlp {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore<f64>,
        rng: &mut R,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        hidden_layers: usize,
        layer_norm: bool,
    ) -> Self {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, hidden_layers));
        widths.push(output);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| Dense::new(store, rng, &format!("{prefix}.{k}"), w[0], w[1]))
            .collect();
        let norm = layer_norm.then(|| {
            let mut ones = Tensor::zeros(1, output);
            ones.data.iter_mut().for_each(|v| *v = 1.0);
            (
                store.insert(format!("{prefix}.ln.gamma"), ones),
                store.insert(format!("{prefix}.ln.beta"), Tensor::zeros(1, output)),
            )
        });
        Self { layers, norm }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.apply(tape, store, h)?;
            if k + 1 < self.layers.len() {
                h = tape.silu(h);
            }
        }
        if let Some((g, b)) = self.norm {
            let g = tape.param(store, g);
            let b = tape.param(store, b);
            h = tape.layer_norm(h, g, b)?;
        }
        Ok(h)
    }
}

/// Precomputed gate bookkeeping for a fixed pre-gate layout.
#[derive(Clone, Debug)]
struct GateInfo {
    scalars: Arc<Vec<usize>>,
    vectors: Arc<Vec<usize>>,
    spec: GateSpec,
}

/// Steerable linear map `f (x)_W a` with optional scalar bias and gate.
///
/// A gated layer producing `out` internally produces `out` plus one extra
/// gate scalar per vector channel.
#[derive(Clone, Debug)]
pub struct SteerableLinear {
    kernel: Arc<CgKernel>,
    weights: [Option<ParamId>; 5],
    bias: Option<ParamId>,
    bias_cols: Arc<Vec<usize>>,
    gate: Option<GateInfo>,
    output: IrrepsLayout,
}

/// How the weights of a [`SteerableLinear`] are initialized.
#[derive(Clone, Copy, Debug)]
pub enum SteerableInit {
    /// `N(0, 1/sqrt(fan_in))` per output degree.
    Standard,
    /// `N(1/n, 1/sqrt(fan_in))` per output degree.
    Shifted(usize),
}

impl SteerableLinear {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore<f64>,
        rng: &mut R,
        prefix: &str,
        input: &IrrepsLayout,
        attr: &IrrepsLayout,
        output: &IrrepsLayout,
        gated: bool,
        bias: bool,
        init: SteerableInit,
    ) -> Self {
        let (n0, n1) = (output.num_scalars(), output.num_vectors());
        let pre = if gated { IrrepsLayout::scalars_vectors(n0 + n1, n1) } else { IrrepsLayout::scalars_vectors(n0, n1) };
        let kernel = CgKernel::new(input, attr, &pre, PathSet::ParityPreserving);
        let weights = CgPath::ALL.map(|p| {
            let (i, j, o) = kernel.path_shape(p);
            if i * j * o == 0 {
                return None;
            }
            let fan_in = kernel.fan_in(p.degrees().2);
            let t = match init {
                SteerableInit::Standard => normal_tensor(rng, i * j, o, 0.0, 1.0 / (fan_in as f64).sqrt()),
                SteerableInit::Shifted(n) => shifted_init(rng, i * j, o, n, fan_in),
            };
            Some(store.insert(format!("{prefix}.{}", p.tag()), t))
        });
        let pre_idx = pre.index();
        let bias = (bias && pre_idx.n0() > 0).then(|| store.insert(format!("{prefix}.bias"), Tensor::zeros(1, pre_idx.n0())));
        let gate = gated.then(|| GateInfo {
            scalars: Arc::new(pre_idx.scalars.clone()),
            vectors: Arc::new(pre_idx.vectors.clone()),
            spec: GateSpec { pass: n0, vectors: n1 },
        });
        Self {
            kernel: Arc::new(kernel),
            weights,
            bias,
            bias_cols: Arc::new(pre_idx.scalars),
            gate,
            output: IrrepsLayout::scalars_vectors(n0, n1),
        }
    }

    pub fn output(&self) -> &IrrepsLayout {
        &self.output
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, f: Var, a: Var) -> Result<Var> {
        let mut w = [f; 5];
        for (slot, id) in w.iter_mut().zip(&self.weights) {
            *slot = match id {
                Some(id) => tape.param(store, *id),
                None => tape.constant(Tensor::zeros(0, 0)),
            };
        }
        let mut h = tape.cg(f, a, w, self.kernel.clone())?;
        if let Some(b) = self.bias {
            let b = tape.param(store, b);
            h = tape.add_cols(h, b, self.bias_cols.clone())?;
        }
        if let Some(g) = &self.gate {
            h = tape.gate(h, g.scalars.clone(), g.vectors.clone(), g.spec)?;
        }
        Ok(h)
    }
}
