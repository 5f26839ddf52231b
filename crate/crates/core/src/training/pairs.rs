use serde_json::Value;

use crate::error::{Error, Result};
use crate::models::GraphSample;
use crate::neighbors::{build_edges, DomainSpec};
use crate::sph::{rpf_accel, Scenario, Trajectory};
use crate::vec3::{add, sub, Vec3};

/// External body force expressed as an acceleration in frame units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForceField {
    None,
    ReversePoiseuille { magnitude: f64 },
}

impl ForceField {
    /// Reads the forcing of a trajectory from its scenario and metadata.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        match traj.scenario {
            Scenario::Tgv => Self::None,
            Scenario::Rpf => {
                let f = traj.metadata.pointer("/scenario_config/force").and_then(Value::as_f64).unwrap_or(0.0);
                Self::ReversePoiseuille { magnitude: f * traj.frame_dt * traj.frame_dt }
            }
        }
    }

    pub fn at(&self, p: Vec3, domain: &DomainSpec) -> Vec3 {
        match *self {
            Self::None => [0.0; 3],
            Self::ReversePoiseuille { magnitude } => rpf_accel(p, domain, magnitude),
        }
    }

    pub fn field(&self, positions: &[Vec3], domain: &DomainSpec) -> Vec<Vec3> {
        positions.iter().map(|&p| self.at(p, domain)).collect()
    }
}

/// Connectivity radius `factor` times the mean interparticle spacing.
pub fn connectivity_radius(domain: &DomainSpec, num_particles: usize, factor: f64) -> f64 {
    factor * (domain.volume() / num_particles.max(1) as f64).cbrt()
}

/// Minimum-image velocity `p^(k) - p^(k-1)` of every particle, frame units.
pub fn frame_velocity(traj: &Trajectory, k: usize) -> Vec<Vec3> {
    let (a, b) = (&traj.positions[k - 1], &traj.positions[k]);
    b.iter().zip(a).map(|(&pb, &pa)| traj.domain.min_image(pb, pa)).collect()
}

/// Builds the sample at frame `t` with `history` velocities ending at `t`
/// and the finite-difference acceleration target `v^(t+1) - v^(t)`.
pub fn make_training_pair(traj: &Trajectory, t: usize, history: usize, radius: f64) -> Result<GraphSample> {
    let frames = traj.num_frames();
    if history == 0 || t < history || t + 1 >= frames {
        return Err(Error::Index(format!("frame {t} with history {history} in a trajectory of {frames} frames")));
    }
    let velocities: Vec<Vec<Vec3>> = (t + 1 - history..=t).map(|k| frame_velocity(traj, k)).collect();
    let next = frame_velocity(traj, t + 1);
    let target = next.iter().zip(velocities.last().expect("history >= 1")).map(|(&a, &b)| sub(a, b)).collect();
    sample_from_state(traj, traj.positions[t].clone(), velocities, radius, Some(target))
}

/// Assembles a sample from a state, computing forces and edges.
pub fn sample_from_state(
    traj: &Trajectory,
    positions: Vec<Vec3>,
    velocities: Vec<Vec<Vec3>>,
    radius: f64,
    target: Option<Vec<Vec3>>,
) -> Result<GraphSample> {
    let domain = traj.domain.clone();
    let edges = build_edges(&positions, &domain, radius)?;
    let force = ForceField::from_trajectory(traj).field(&positions, &domain);
    Ok(GraphSample { positions, velocities, force, domain, radius, edges, target })
}

/// Target making `p_next = p + v_last + a` exact for the given state.
pub fn corrected_target(domain: &DomainSpec, positions: &[Vec3], last_velocity: &[Vec3], next: &[Vec3]) -> Vec<Vec3> {
    positions
        .iter()
        .zip(last_velocity)
        .zip(next)
        .map(|((&p, &v), &pn)| sub(domain.min_image(pn, p), v))
        .collect()
}

/// Positions one frame ahead under semi-implicit Euler: `v' = v + a`, `p' = p + v'`.
pub fn integrate(domain: &DomainSpec, positions: &[Vec3], velocity: &[Vec3], acceleration: &[Vec3]) -> (Vec<Vec3>, Vec<Vec3>) {
    let v_new: Vec<Vec3> = velocity.iter().zip(acceleration).map(|(&v, &a)| add(v, a)).collect();
    let p_new = positions.iter().zip(&v_new).map(|(&p, &v)| domain.wrap(add(p, v))).collect();
    (p_new, v_new)
}
