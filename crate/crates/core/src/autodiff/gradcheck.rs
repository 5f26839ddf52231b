use std::collections::BTreeMap;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::scalar::Real;

/// A scalar objective that can be evaluated in any floating-point type.
pub trait Objective {
    fn loss<U: Real>(&self, tape: &mut Tape<U>, store: &ParamStore<U>) -> Result<Var>;

    /// Groups parameters for reporting; defaults to the last name segment.
    fn layer_type(&self, name: &str) -> String {
        name.rsplit('.').next().unwrap_or(name).to_string()
    }
}

/// Worst relative error over the checked entries of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerError {
    pub layer: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub layers: Vec<LayerError>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_err).fold(0.0, f64::max)
    }
}

/// Compares reverse-mode gradients computed in `T` against fourth-order
/// central differences evaluated in f64. At most `max_per_param` evenly spaced
/// entries of each tensor are perturbed.
pub fn check_gradients<T: Real, O: Objective>(
    objective: &O,
    store: &ParamStore<f64>,
    step: f64,
    floor: f64,
    max_per_param: usize,
) -> Result<GradCheckReport> {
    let cast: ParamStore<T> = store.cast();
    let mut tape = Tape::<T>::new();
    let loss = objective.loss(&mut tape, &cast)?;
    let analytic = tape.backward(loss, &cast)?;

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut t = Tape::<f64>::no_grad();
        let l = objective.loss(&mut t, s)?;
        Ok(t.value(l).item())
    };

    let mut worst: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut probe = store.clone();
    for p in 0..store.len() {
        let n = store.tensors()[p].len();
        if n == 0 {
            continue;
        }
        let count = n.min(max_per_param.max(1));
        let layer = objective.layer_type(&store.names()[p]);
        for k in 0..count {
            let i = k * n / count;
            let orig = store.tensors()[p].data[i];
            let mut at = |offset: f64| -> Result<f64> {
                probe.tensors_mut()[p].data[i] = orig + offset;
                eval(&probe)
            };
            let (up1, down1, up2, down2) = (at(step)?, at(-step)?, at(2.0 * step)?, at(-2.0 * step)?);
            probe.tensors_mut()[p].data[i] = orig;
            let numeric = (8.0 * (up1 - down1) - (up2 - down2)) / (12.0 * step);
            let a = analytic.tensors[p].data[i].to_f64_lossy();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            let entry = worst.entry(layer.clone()).or_insert((0.0, 0));
            entry.0 = entry.0.max(rel);
            entry.1 += 1;
        }
    }
    Ok(GradCheckReport {
        layers: worst.into_iter().map(|(layer, (max_rel_err, checked))| LayerError { layer, max_rel_err, checked }).collect(),
    })
}
