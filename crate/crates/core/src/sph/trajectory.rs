use serde_json::{json, Value};

use super::scenario::{initial_state, Scenario, ScenarioConfig};
use super::solver::{ParticleState, SphSolver};
use crate::error::Result;
use crate::neighbors::DomainSpec;
use crate::vec3::{norm2, Vec3};

/// Uniformly spaced frames of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub scenario: Scenario,
    pub domain: DomainSpec,
    /// Physical time between frames.
    pub frame_dt: f64,
    pub positions: Vec<Vec<Vec3>>,
    pub velocities: Option<Vec<Vec<Vec3>>>,
    /// Free-form provenance (seed, solver constants, particle mass...).
    pub metadata: Value,
}

impl Trajectory {
    pub fn num_frames(&self) -> usize {
        self.positions.len()
    }

    pub fn num_particles(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Particle mass from metadata, or `V / N` at unit density.
    pub fn particle_mass(&self) -> f64 {
        self.metadata
            .get("particle_mass")
            .and_then(Value::as_f64)
            .unwrap_or_else(|| self.domain.volume() / self.num_particles().max(1) as f64)
    }

    /// Total kinetic energy per frame from stored velocities.
    pub fn kinetic_energy(&self) -> Option<Vec<f64>> {
        let m = self.particle_mass();
        self.velocities
            .as_ref()
            .map(|vs| vs.iter().map(|frame| frame.iter().map(|v| 0.5 * m * norm2(*v)).sum()).collect())
    }
}

/// Runs the solver and records every `stride`-th state after the warmup.
pub fn generate_trajectory(config: &ScenarioConfig, seed: u64) -> Result<Trajectory> {
    generate_trajectory_with(config, seed, |_, _| {})
}

/// Like [`generate_trajectory`], calling `on_frame(index, state)` per recorded frame.
pub fn generate_trajectory_with<F>(config: &ScenarioConfig, seed: u64, mut on_frame: F) -> Result<Trajectory>
where
    F: FnMut(usize, &ParticleState),
{
    let mut solver = SphSolver::new(config.clone())?;
    let mut state = initial_state(config, seed)?;
    let warmup_steps = (config.warmup / config.dt).round() as usize;
    for _ in 0..warmup_steps {
        state = solver.step(&state)?;
    }
    let mut positions = Vec::with_capacity(config.frames);
    let mut velocities = Vec::with_capacity(config.frames);
    for frame in 0..config.frames {
        if frame > 0 {
            for _ in 0..config.stride {
                state = solver.step(&state)?;
            }
        }
        on_frame(frame, &state);
        positions.push(state.positions.clone());
        velocities.push(state.velocities.clone());
    }
    let metadata = json!({
        "seed": seed,
        "generator": concat!("lagfluid ", env!("CARGO_PKG_VERSION")),
        "particle_mass": state.masses.first().copied().unwrap_or(0.0),
        "scenario_config": serde_json::to_value(config)?,
        "reynolds": config.reynolds(),
        "sound_speed": config.sound_speed(),
        "background_pressure": config.background_pressure(),
        "warmup_steps": warmup_steps,
    });
    Ok(Trajectory {
        scenario: config.scenario,
        domain: config.domain,
        frame_dt: config.frame_dt(),
        positions,
        velocities: Some(velocities),
        metadata,
    })
}
