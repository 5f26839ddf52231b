use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{norm2, Vec3};

/// Smallest admissible standard deviation; guards degenerate datasets.
const STD_FLOOR: f64 = 1e-12;

/// How model inputs and targets are rescaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Per-component mean and standard deviation (not rotation-equivariant).
    Component,
    /// One scalar scale per quantity, no centering (commutes with rotations).
    Magnitude,
}

/// Dataset statistics for velocities (inputs) and accelerations (targets),
/// both in frame units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormalizationStats {
    Component { vel_mean: Vec3, vel_std: Vec3, acc_mean: Vec3, acc_std: Vec3 },
    /// `*_std` is the root-mean-square component: `sqrt(mean |x|^2 / 3)`.
    Magnitude { vel_std: f64, acc_std: f64 },
}

fn component_stats(xs: &[Vec3]) -> (Vec3, Vec3) {
    let n = xs.len() as f64;
    let mut mean = [0.0; 3];
    for x in xs {
        for d in 0..3 {
            mean[d] += x[d] / n;
        }
    }
    let mut var = [0.0; 3];
    for x in xs {
        for d in 0..3 {
            var[d] += (x[d] - mean[d]).powi(2) / n;
        }
    }
    (mean, var.map(|v| v.sqrt().max(STD_FLOOR)))
}

fn rms_component(xs: &[Vec3]) -> f64 {
    let s: f64 = xs.iter().map(|x| norm2(*x)).sum();
    (s / (3.0 * xs.len() as f64)).sqrt().max(STD_FLOOR)
}

impl NormalizationStats {
    pub fn identity(mode: NormalizationMode) -> Self {
        match mode {
            NormalizationMode::Component => {
                Self::Component { vel_mean: [0.0; 3], vel_std: [1.0; 3], acc_mean: [0.0; 3], acc_std: [1.0; 3] }
            }
            NormalizationMode::Magnitude => Self::Magnitude { vel_std: 1.0, acc_std: 1.0 },
        }
    }

    /// Statistics over pooled velocity and acceleration samples.
    pub fn compute(mode: NormalizationMode, velocities: &[Vec3], accelerations: &[Vec3]) -> Result<Self> {
        if velocities.is_empty() || accelerations.is_empty() {
            return Err(Error::Config("normalization statistics need at least one sample".into()));
        }
        if velocities.iter().chain(accelerations).any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("normalization input".into()));
        }
        Ok(match mode {
            NormalizationMode::Component => {
                let (vel_mean, vel_std) = component_stats(velocities);
                let (acc_mean, acc_std) = component_stats(accelerations);
                Self::Component { vel_mean, vel_std, acc_mean, acc_std }
            }
            NormalizationMode::Magnitude => {
                Self::Magnitude { vel_std: rms_component(velocities), acc_std: rms_component(accelerations) }
            }
        })
    }

    pub fn mode(&self) -> NormalizationMode {
        match self {
            Self::Component { .. } => NormalizationMode::Component,
            Self::Magnitude { .. } => NormalizationMode::Magnitude,
        }
    }

    pub fn normalize_velocity(&self, v: Vec3) -> Vec3 {
        match self {
            Self::Component { vel_mean, vel_std, .. } => [0, 1, 2].map(|d| (v[d] - vel_mean[d]) / vel_std[d]),
            Self::Magnitude { vel_std, .. } => v.map(|x| x / vel_std),
        }
    }

    pub fn denormalize_velocity(&self, v: Vec3) -> Vec3 {
        match self {
            Self::Component { vel_mean, vel_std, .. } => [0, 1, 2].map(|d| v[d] * vel_std[d] + vel_mean[d]),
            Self::Magnitude { vel_std, .. } => v.map(|x| x * vel_std),
        }
    }

    pub fn normalize_acceleration(&self, a: Vec3) -> Vec3 {
        match self {
            Self::Component { acc_mean, acc_std, .. } => [0, 1, 2].map(|d| (a[d] - acc_mean[d]) / acc_std[d]),
            Self::Magnitude { acc_std, .. } => a.map(|x| x / acc_std),
        }
    }

    pub fn denormalize_acceleration(&self, a: Vec3) -> Vec3 {
        match self {
            Self::Component { acc_mean, acc_std, .. } => [0, 1, 2].map(|d| a[d] * acc_std[d] + acc_mean[d]),
            Self::Magnitude { acc_std, .. } => a.map(|x| x * acc_std),
        }
    }

    /// External forces (already in frame-unit acceleration) are scaled like
    /// accelerations but never centered, so a zero force stays zero.
    pub fn scale_force(&self, f: Vec3) -> Vec3 {
        match self {
            Self::Component { acc_std, .. } => [0, 1, 2].map(|d| f[d] / acc_std[d]),
            Self::Magnitude { acc_std, .. } => f.map(|x| x / acc_std),
        }
    }
}
