//! Independent reference implementations shared by the integration tests.

use std::collections::BTreeSet;

use lagfluid::autodiff::{check_gradients, GradCheckReport, Objective, ParamStore, Tape, Var};
use lagfluid::models::{GraphSample, HaeMode, Model, ModelConfig, ModelKind, PreparedInput};
use lagfluid::steerable::{CgPath, CgWeights, IrrepsLayout, PathSet, SteerableTensor};
use lagfluid::training::NormalizationStats;
use lagfluid::vec3::Vec3;
use lagfluid::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{gaussian_vec_n, normal};

/// Real Clebsch-Gordan coefficients `C[m_out][m_in][m_attr]` in the
/// Cartesian basis for degrees <= 1, written out entry by entry.
pub fn table(l_in: u8, l_attr: u8, l_out: u8) -> Vec<Vec<Vec<f64>>> {
    let dim = |l: u8| if l == 0 { 1 } else { 3 };
    let mut c = vec![vec![vec![0.0; dim(l_attr)]; dim(l_in)]; dim(l_out)];
    match (l_in, l_attr, l_out) {
        (0, 0, 0) => c[0][0][0] = 1.0,
        (0, 1, 1) => (0..3).for_each(|m| c[m][0][m] = 1.0),
        (1, 0, 1) => (0..3).for_each(|m| c[m][m][0] = 1.0),
        (1, 1, 0) => (0..3).for_each(|m| c[0][m][m] = 1.0 / 3f64.sqrt()),
        (1, 1, 1) => {
            let s = 1.0 / 2f64.sqrt();
            // Levi-Civita: e_xyz = e_yzx = e_zxy = 1, odd permutations -1.
            for (k, i, j) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
                c[k][i][j] = s;
                c[k][j][i] = -s;
            }
        }
        _ => unreachable!(),
    }
    c
}

/// Components of channel `ch` of degree `l` in `t`.
pub fn channel(t: &SteerableTensor<f64>, l: u8, ch: usize) -> Vec<f64> {
    if l == 0 {
        vec![t.scalars()[ch]]
    } else {
        t.vectors()[ch].to_vec()
    }
}

pub fn cg_brute_force(f: &SteerableTensor<f64>, a: &SteerableTensor<f64>, w: &CgWeights<f64>, out: &IrrepsLayout) -> SteerableTensor<f64> {
    let n_out0 = out.num_scalars();
    let mut scalars = vec![0.0; n_out0];
    let mut vectors = vec![[0.0; 3]; out.num_vectors()];
    let count = |t: &IrrepsLayout, l: u8| if l == 0 { t.num_scalars() } else { t.num_vectors() };
    for path in CgPath::ALL {
        if !w.kernel().is_active(path) {
            continue;
        }
        let (li, la, lo) = path.degrees();
        let c = table(li, la, lo);
        let (ni, na, no) = (count(f.layout(), li), count(a.layout(), la), count(out, lo));
        let weights = w.path(path);
        for i in 0..ni {
            let fi = channel(f, li, i);
            for j in 0..na {
                let aj = channel(a, la, j);
                for k in 0..no {
                    let wk = weights[(i * na + j) * no + k];
                    for (m, cm) in c.iter().enumerate() {
                        let mut acc = 0.0;
                        for (p, cmp) in cm.iter().enumerate() {
                            for (q, &cmpq) in cmp.iter().enumerate() {
                                acc += cmpq * fi[p] * aj[q];
                            }
                        }
                        if lo == 0 {
                            scalars[k] += wk * acc;
                        } else {
                            vectors[k][m] += wk * acc;
                        }
                    }
                }
            }
        }
    }
    let flat = SteerableTensor::from_parts(&scalars, &vectors);
    // Re-order into `out`'s channel order.
    let idx = out.index();
    let mut coeffs = vec![0.0; out.dim()];
    for (k, &o) in idx.scalars.iter().enumerate() {
        coeffs[o] = flat.scalars()[k];
    }
    for (k, &o) in idx.vectors.iter().enumerate() {
        coeffs[o..o + 3].copy_from_slice(&flat.vectors()[k]);
    }
    SteerableTensor::new(out.clone(), coeffs).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, layout: &IrrepsLayout) -> SteerableTensor<f64> {
    SteerableTensor::new(layout.clone(), gaussian_vec_n(rng, layout.dim(), 1.0)).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, input: &IrrepsLayout, attr: &IrrepsLayout, out: &IrrepsLayout, paths: PathSet) -> CgWeights<f64> {
    let mut w = CgWeights::zeros(input.clone(), attr.clone(), out.clone(), paths);
    for p in CgPath::ALL {
        for x in w.path_mut(p) {
            *x = gaussian_vec_n(rng, 1, 1.0)[0];
        }
    }
    w
}

/// O(N^2) oracle with its own minimum-image arithmetic.
pub fn neighbor_brute_force(p: &[Vec3], lengths: [f64; 3], radius: f64) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for (r, pr) in p.iter().enumerate() {
        for (s, ps) in p.iter().enumerate() {
            if r == s {
                continue;
            }
            let d2: f64 = (0..3)
                .map(|k| {
                    let d = pr[k] - ps[k];
                    let d = d - lengths[k] * (d / lengths[k]).round();
                    d * d
                })
                .sum();
            if d2.sqrt() < radius {
                out.insert((s, r));
            }
        }
    }
    out
}

/// Adds small Gaussian noise to every parameter so that zero-initialized
/// biases and the exact shifted means are exercised too.
pub fn perturb(store: &mut ParamStore<f64>, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in store.tensors_mut() {
        for x in t.data.iter_mut() {
            *x += scale * normal(&mut rng);
        }
    }
}

/// One-step model loss on a fixed prepared sample, optionally with a
/// deliberately corrupted backward rule.
pub struct ModelLoss {
    pub model: Model,
    pub input: PreparedInput,
    pub fault: Option<(&'static str, f64)>,
}

impl ModelLoss {
    pub fn new(config: ModelConfig, sample: &GraphSample) -> (Self, ParamStore<f64>) {
        let (model, mut store) = Model::build(&config).unwrap();
        perturb(&mut store, config.init_seed + 77, 0.05);
        let stats = NormalizationStats::identity(config.kind.normalization());
        let input = model.prepare(sample, &stats).unwrap();
        (Self { model, input, fault: None }, store)
    }
}

impl Objective for ModelLoss {
    fn loss<U: Real>(&self, tape: &mut Tape<U>, store: &ParamStore<U>) -> lagfluid::Result<Var> {
        if let Some((op, factor)) = self.fault {
            tape.inject_backward_fault(op, U::c(factor));
        }
        self.model.loss(tape, store, &self.input)
    }

    fn layer_type(&self, name: &str) -> String {
        Model::layer_type(name)
    }
}


/// Finite-difference step of the gradient checks.
pub const GRAD_STEP: f64 = 1e-3;
/// Absolute floor of the relative error in double precision.
pub const F64_FLOOR: f64 = 1e-8;
/// Single-precision floor relative to the largest gradient entry: entries
/// produced by cancelling sums carry f32 rounding of the summands, not of
/// the result.
pub const F32_FLOOR_FRACTION: f64 = 1e-4;

pub fn gradient_scale(obj: &ModelLoss, store: &ParamStore<f64>) -> f64 {
    let mut tape = Tape::new();
    let loss = obj.loss(&mut tape, store).unwrap();
    tape.backward(loss, store).unwrap().max_abs()
}

/// Worst relative gradient error of `config` in f64 and f32, per layer type.
pub fn model_grad_check(config: &ModelConfig, sample: &GraphSample) -> (GradCheckReport, GradCheckReport) {
    let (obj, store) = ModelLoss::new(config.clone(), sample);
    let r64 = check_gradients::<f64, _>(&obj, &store, GRAD_STEP, F64_FLOOR, 8).unwrap();
    let floor32 = F32_FLOOR_FRACTION * gradient_scale(&obj, &store);
    let r32 = check_gradients::<f32, _>(&obj, &store, GRAD_STEP, floor32, 8).unwrap();
    (r64, r32)
}

/// Layer types a gradient check of `kind` must cover (prefix match).
pub fn expected_layers(kind: ModelKind) -> Vec<&'static str> {
    let cg = ["cg_w0x0_0", "cg_w0x1_1", "cg_w1x0_1", "cg_w1x1_0", "steerable_bias"];
    match kind {
        ModelKind::Gns => vec!["dense_bias", "dense_weight", "layer_norm"],
        ModelKind::SegnnAvg => cg.to_vec(),
        ModelKind::SegnnLin => [&cg[..], &["hae_lin"]].concat(),
        ModelKind::SegnnTensor => [&cg[..], &["hae_tensor_"]].concat(),
    }
}

/// Tiny GNS plus SEGNN in every HAE mode, history 3.
pub fn tiny_grad_configs() -> Vec<ModelConfig> {
    let mut gns = ModelConfig::gns(2, 8, 3);
    gns.init_seed = 1;
    let mut out = vec![gns];
    for (k, mode) in [HaeMode::Avg, HaeMode::Lin, HaeMode::Tensor].into_iter().enumerate() {
        let mut c = ModelConfig::segnn(mode, 2, 8, 3);
        c.init_seed = 2 + k as u64;
        out.push(c);
    }
    out
}
