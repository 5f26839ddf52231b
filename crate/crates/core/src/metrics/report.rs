use serde::{Deserialize, Serialize};

use super::sinkhorn::{sinkhorn_distance, SinkhornConfig};
use crate::error::{Error, Result};
use crate::neighbors::DomainSpec;
use crate::par;
use crate::sph::Trajectory;
use crate::vec3::{norm2, Vec3};

/// Mean over particles and components of the squared minimum-image error.
pub fn mse_positions(pred: &[Vec3], reference: &[Vec3], domain: &DomainSpec) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!("{} predicted vs {} reference particles", pred.len(), reference.len())));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred.iter().zip(reference).map(|(&p, &r)| norm2(domain.min_image(p, r))).sum();
    Ok(total / (3 * pred.len()) as f64)
}

/// `sum_i m_i |v_i|^2 / 2`.
pub fn kinetic_energy(velocities: &[Vec3], masses: &[f64]) -> Result<f64> {
    if velocities.len() != masses.len() {
        return Err(Error::Shape("velocity and mass counts differ".into()));
    }
    Ok(velocities.iter().zip(masses).map(|(v, m)| 0.5 * m * norm2(*v)).sum())
}

/// Kinetic energy of frames `1..` using backward finite-difference
/// velocities `(p^k - p^(k-1)) / frame_dt`; entry `k - 1` belongs to frame `k`.
pub fn frame_kinetic_energies(traj: &Trajectory) -> Vec<f64> {
    let m = traj.particle_mass();
    let inv_dt = 1.0 / traj.frame_dt;
    (1..traj.num_frames())
        .map(|k| {
            let (a, b) = (&traj.positions[k - 1], &traj.positions[k]);
            b.iter().zip(a).map(|(&pb, &pa)| 0.5 * m * norm2(traj.domain.min_image(pb, pa)) * inv_dt * inv_dt).sum()
        })
        .collect()
}

/// Mean of `(E_pred - E_ref)^2`.
pub fn mse_ekin(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Shape("energy series lengths differ".into()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub sinkhorn: SinkhornConfig,
    /// Evaluate the Sinkhorn divergence on every `sinkhorn_every`-th step.
    pub sinkhorn_every: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { sinkhorn: SinkhornConfig::default(), sinkhorn_every: 1 }
    }
}

/// Per-step comparison of a rollout against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Position MSE per predicted step.
    pub mse_p: Vec<f64>,
    pub ekin_pred: Vec<f64>,
    pub ekin_ref: Vec<f64>,
    pub mse_ekin: f64,
    /// Sinkhorn divergence per evaluated step (`None` where skipped).
    pub sinkhorn: Vec<Option<f64>>,
    pub sinkhorn_mean: f64,
    /// Whether every Sinkhorn evaluation met its tolerance.
    pub sinkhorn_converged: bool,
    /// Step at which the rollout stopped early, if it did.
    pub diverged_at: Option<usize>,
}

impl EvalReport {
    pub fn mse_p_mean(&self) -> f64 {
        if self.mse_p.is_empty() {
            0.0
        } else {
            self.mse_p.iter().sum::<f64>() / self.mse_p.len() as f64
        }
    }
}

/// Compares frames `seed..` of `pred` with frames `start + seed..` of
/// `reference`, where `seed` is the number of ground-truth seed frames at
/// the head of `pred`.
pub fn evaluate_rollout(
    pred: &Trajectory,
    reference: &Trajectory,
    start: usize,
    seed: usize,
    diverged_at: Option<usize>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if seed == 0 || pred.num_frames() < seed {
        return Err(Error::Shape("rollout shorter than its seed frames".into()));
    }
    if start + seed > reference.num_frames() {
        return Err(Error::Index("reference shorter than the rollout seed".into()));
    }
    let steps = (pred.num_frames() - seed).min(reference.num_frames() - start - seed);
    let domain = &reference.domain;
    let mse_p = (0..steps)
        .map(|k| mse_positions(&pred.positions[seed + k], &reference.positions[start + seed + k], domain))
        .collect::<Result<Vec<_>>>()?;
    let e_pred = frame_kinetic_energies(pred);
    let e_ref = frame_kinetic_energies(reference);
    // Energy of frame f lives at index f - 1.
    let ekin_pred: Vec<f64> = (0..steps).map(|k| e_pred[seed + k - 1]).collect();
    let ekin_ref: Vec<f64> = (0..steps).map(|k| e_ref[start + seed + k - 1]).collect();
    let every = options.sinkhorn_every.max(1);
    let evaluated = par::map_range(steps, |k| {
        if (k + 1) % every != 0 && k + 1 != steps {
            return Ok(None);
        }
        sinkhorn_distance(&pred.positions[seed + k], &reference.positions[start + seed + k], domain, &options.sinkhorn).map(Some)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let sinkhorn: Vec<Option<f64>> = evaluated.iter().map(|r| r.map(|s| s.value)).collect();
    let values: Vec<f64> = sinkhorn.iter().flatten().copied().collect();
    let sinkhorn_mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
    Ok(EvalReport {
        mse_ekin: mse_ekin(&ekin_pred, &ekin_ref)?,
        mse_p,
        ekin_pred,
        ekin_ref,
        sinkhorn,
        sinkhorn_mean,
        sinkhorn_converged: evaluated.iter().flatten().all(|r| r.converged),
        diverged_at,
    })
}
