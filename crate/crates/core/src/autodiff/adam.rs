use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Learning rate as a function of the step counter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// `lr0 * (lr_final / lr0)^(step / total_steps)`, held at `lr_final` afterwards.
    Exponential { lr0: f64, lr_final: f64, total_steps: u64 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::Exponential { lr0: 1e-3, lr_final: 1e-5, total_steps: 100_000 }
    }
}

impl LrSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        match *self {
            Self::Constant { lr } => lr,
            Self::Exponential { lr0, lr_final, total_steps } => {
                let frac = if total_steps == 0 { 1.0 } else { (step as f64 / total_steps as f64).min(1.0) };
                lr0 * (lr_final / lr0).powf(frac)
            }
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = || store.tensors().iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        Self { step: 0, m: zeros(), v: zeros() }
    }

    pub fn matches(&self, store: &ParamStore<T>) -> bool {
        self.m.len() == store.len()
            && self.v.len() == store.len()
            && store.tensors().iter().zip(&self.m).zip(&self.v).all(|((p, m), v)| p.len() == m.len() && p.len() == v.len())
    }
}

/// One bias-corrected Adam update with learning rate `lr`.
pub fn adam_step<T: Real>(
    store: &mut ParamStore<T>,
    grads: &Grads<T>,
    state: &mut OptimizerState<T>,
    config: &AdamConfig,
    lr: f64,
) -> Result<()> {
    if !state.matches(store) || grads.tensors.len() != store.len() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    if grads.tensors.iter().any(|g| g.data.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (T::c(config.beta1), T::c(config.beta2));
    let c1 = T::c(1.0 - config.beta1.powf(t));
    let c2 = T::c(1.0 - config.beta2.powf(t));
    let (lr, eps) = (T::c(lr), T::c(config.eps));
    for (((p, g), m), v) in store.tensors_mut().iter_mut().zip(&grads.tensors).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = b1 * m.data[i] + (T::one() - b1) * gi;
            v.data[i] = b2 * v.data[i] + (T::one() - b2) * gi * gi;
            let mhat = m.data[i] / c1;
            let vhat = v.data[i] / c2;
            p.data[i] = p.data[i] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
