use rand::Rng;

use super::layers::{SteerableInit, SteerableLinear};
use super::sample::GraphSample;
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::HaeMode;
use crate::scalar::Real;
use crate::steerable::{sh_embed_into, IrrepsLayout};

/// Per-edge attributes `Y(p_i - p_j)` as an `[E, 4]` tensor (`1x0e+1x1o`).
pub fn edge_attributes(sample: &GraphSample) -> Tensor<f64> {
    let e = &sample.edges;
    let mut out = Tensor::zeros(e.len(), 4);
    for (k, d) in e.displacements.iter().enumerate() {
        sh_embed_into(d, out.row_mut(k));
    }
    out
}

/// Per-step node attributes `a_i^(h) = Y(v_i^(h)) + (1/nu) sum_j a_ij`,
/// optionally plus `Y(F_i)`; one `[N, 4]` tensor per history step.
pub fn history_attributes(sample: &GraphSample, edge_attrs: &Tensor<f64>, avg_num_neighbors: f64, with_force: bool) -> Vec<Tensor<f64>> {
    let n = sample.num_nodes();
    let e = &sample.edges;
    let mut base = Tensor::zeros(n, 4);
    let mut y = [0.0; 4];
    for i in 0..n {
        let row = base.row_mut(i);
        for k in e.offsets[i]..e.offsets[i + 1] {
            for (r, &a) in row.iter_mut().zip(edge_attrs.row(k)) {
                *r += a / avg_num_neighbors;
            }
        }
        if with_force {
            sh_embed_into(&sample.force[i], &mut y);
            row.iter_mut().zip(&y).for_each(|(r, &a)| *r += a);
        }
    }
    sample
        .velocities
        .iter()
        .map(|vel| {
            let mut a = base.clone();
            for (i, v) in vel.iter().enumerate() {
                sh_embed_into(v, &mut y);
                a.row_mut(i).iter_mut().zip(&y).for_each(|(r, &s)| *r += s);
            }
            a
        })
        .collect()
}

/// Direct sum of the per-step attributes: `H x 0e + H x 1o` per node.
pub fn stack_history(history: &[Tensor<f64>]) -> Tensor<f64> {
    let h = history.len();
    let n = history.first().map_or(0, |t| t.rows);
    let mut out = Tensor::zeros(n, 4 * h);
    for i in 0..n {
        let row = out.row_mut(i);
        for (k, a) in history.iter().enumerate() {
            let src = a.row(i);
            row[k] = src[0];
            row[h + 3 * k..h + 3 * k + 3].copy_from_slice(&src[1..4]);
        }
    }
    out
}

/// One historical attribute embedding site.
#[derive(Clone, Debug)]
pub enum Hae {
    Avg,
    Lin { weights: Vec<ParamId> },
    Tensor { layer: SteerableLinear },
}

impl Hae {
    pub fn new<R: Rng>(store: &mut ParamStore<f64>, rng: &mut R, prefix: &str, mode: HaeMode, history: usize) -> Self {
        match mode {
            HaeMode::Avg => Self::Avg,
            HaeMode::Lin => Self::Lin {
                weights: (0..history)
                    .map(|h| store.insert(format!("{prefix}.w_h{h}"), super::layers::shifted_init(rng, 1, 1, history, history)))
                    .collect(),
            },
            HaeMode::Tensor => {
                let stacked = IrrepsLayout::scalars_vectors(history, history);
                let sh = IrrepsLayout::sh1();
                Self::Tensor {
                    layer: SteerableLinear::new(store, rng, prefix, &stacked, &sh, &sh, true, false, SteerableInit::Shifted(history)),
                }
            }
        }
    }

    /// Combines per-step attributes (`[N, 4]` each, oldest first); `stacked`
    /// is the direct sum required by the tensor mode.
    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, history: &[Var], stacked: Option<Var>) -> Result<Var> {
        let last = *history.last().ok_or_else(|| Error::Config("empty attribute history".into()))?;
        match self {
            Self::Avg => {
                let mut acc = history[0];
                for &a in &history[1..] {
                    acc = tape.add(acc, a)?;
                }
                Ok(tape.scale(acc, T::c(1.0 / history.len() as f64)))
            }
            Self::Lin { weights } => {
                if weights.len() != history.len() {
                    return Err(Error::Shape(format!("{} HAE weights for history {}", weights.len(), history.len())));
                }
                let mut acc: Option<Var> = None;
                for (&a, &w) in history.iter().zip(weights) {
                    let w = tape.param(store, w);
                    let term = tape.scale_by(a, w, 0)?;
                    acc = Some(match acc {
                        Some(s) => tape.add(s, term)?,
                        None => term,
                    });
                }
                Ok(acc.expect("non-empty history"))
            }
            Self::Tensor { layer } => {
                let stacked = stacked.ok_or_else(|| Error::Config("tensor HAE needs the stacked history".into()))?;
                layer.apply(tape, store, stacked, last)
            }
        }
    }
}
