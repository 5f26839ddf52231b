use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::models::{GraphSample, Model};
use crate::sph::Trajectory;
use crate::vec3::Vec3;

use super::normalize::NormalizationStats;
use super::pairs::{frame_velocity, integrate, sample_from_state};

/// Anything that predicts frame-unit accelerations from a graph sample.
pub trait AccelerationModel {
    fn history(&self) -> usize;
    fn accelerations(&self, sample: &GraphSample) -> Result<Vec<Vec3>>;
}

/// A trained network with its parameters and normalization.
pub struct LearnedSimulator<'a> {
    pub model: &'a Model,
    pub params: &'a ParamStore<f64>,
    pub stats: &'a NormalizationStats,
}

impl AccelerationModel for LearnedSimulator<'_> {
    fn history(&self) -> usize {
        self.model.config().history
    }

    fn accelerations(&self, sample: &GraphSample) -> Result<Vec<Vec3>> {
        self.model.predict(self.params, sample, self.stats)
    }
}

/// Baseline predicting no acceleration (straight-line motion).
pub struct ZeroAcceleration {
    pub history: usize,
}

impl AccelerationModel for ZeroAcceleration {
    fn history(&self) -> usize {
        self.history
    }

    fn accelerations(&self, sample: &GraphSample) -> Result<Vec<Vec3>> {
        Ok(vec![[0.0; 3]; sample.num_nodes()])
    }
}

/// Result of an autoregressive rollout.
#[derive(Clone, Debug)]
pub struct RolloutOutcome {
    /// `H + 1` ground-truth seed frames followed by the predicted frames.
    pub trajectory: Trajectory,
    /// Index (0-based) of the prediction step that produced non-finite values.
    pub diverged_at: Option<usize>,
}

impl RolloutOutcome {
    pub fn into_result(self) -> Result<Trajectory> {
        match self.diverged_at {
            Some(step) => Err(Error::RolloutDiverged { step }),
            None => Ok(self.trajectory),
        }
    }
}

/// Rolls `model` forward `n_steps` frames from the `H + 1` reference frames
/// `start..=start + H`, with semi-implicit Euler in frame units. Stops early
/// (keeping the frames so far) if a prediction is not finite.
pub fn rollout<M: AccelerationModel + ?Sized>(
    model: &M,
    reference: &Trajectory,
    start: usize,
    n_steps: usize,
    radius: f64,
) -> Result<RolloutOutcome> {
    let h = model.history();
    if h == 0 || start + h >= reference.num_frames() {
        return Err(Error::Index(format!(
            "rollout seed frames {start}..={} exceed {} reference frames",
            start + h,
            reference.num_frames()
        )));
    }
    let mut positions: Vec<Vec<Vec3>> = reference.positions[start..=start + h].to_vec();
    let mut history: Vec<Vec<Vec3>> = (start + 1..=start + h).map(|k| frame_velocity(reference, k)).collect();
    let mut diverged_at = None;
    for step in 0..n_steps {
        let current = positions.last().expect("seed frames").clone();
        let sample = sample_from_state(reference, current, history.clone(), radius, None)?;
        let acc = match model.accelerations(&sample) {
            Ok(a) if a.iter().flatten().all(|x| x.is_finite()) => a,
            Ok(_) | Err(Error::NonFinite(_)) => {
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        let (p, v) = integrate(&reference.domain, &sample.positions, history.last().expect("history"), &acc);
        if p.iter().flatten().any(|x| !x.is_finite()) {
            diverged_at = Some(step);
            break;
        }
        positions.push(p);
        history.remove(0);
        history.push(v);
    }
    let mut metadata = reference.metadata.clone();
    if let Some(obj) = metadata.as_object_mut() {
        obj.insert("rollout_start".into(), start.into());
        obj.insert("rollout_steps".into(), n_steps.into());
    }
    Ok(RolloutOutcome {
        trajectory: Trajectory {
            scenario: reference.scenario,
            domain: reference.domain.clone(),
            frame_dt: reference.frame_dt,
            positions,
            velocities: None,
            metadata,
        },
        diverged_at,
    })
}
