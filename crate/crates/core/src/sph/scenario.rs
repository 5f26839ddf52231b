use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::solver::{ParticleState, SphSolver};
use crate::error::{Error, Result};
use crate::neighbors::DomainSpec;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Tgv,
    Rpf,
}

impl Scenario {
    pub fn tag(self) -> u8 {
        match self {
            Scenario::Tgv => 0,
            Scenario::Rpf => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Scenario::Tgv),
            1 => Ok(Scenario::Rpf),
            t => Err(Error::Format(format!("unknown scenario tag {t}"))),
        }
    }
}

/// Physical and numerical setup of one flow case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub domain: DomainSpec,
    /// Lattice spacing; also the kernel smoothing length.
    pub dx: f64,
    pub reference_velocity: f64,
    pub reference_length: f64,
    /// Dynamic viscosity.
    pub viscosity: f64,
    pub rest_density: f64,
    /// Solver time step.
    pub dt: f64,
    /// Recorded frames per trajectory.
    pub frames: usize,
    /// Solver steps between recorded frames.
    pub stride: usize,
    /// Physical time simulated and discarded before recording.
    pub warmup: f64,
    /// Body-force magnitude of the reverse Poiseuille flow.
    pub force: f64,
    /// Uniform lattice jitter amplitude, as a fraction of `dx`.
    pub jitter: f64,
    /// Damped solver steps (velocities zeroed, no forcing) applied to the
    /// jittered lattice before the flow field is imposed.
    pub relax_steps: usize,
    /// `c0 = sound_speed_factor * reference_velocity`.
    pub sound_speed_factor: f64,
    /// Background pressure as a multiple of `p0 = rho0 c0^2`.
    pub background_pressure_factor: f64,
}

impl ScenarioConfig {
    /// Taylor-Green vortex in the unit box with `n_side^3` particles.
    pub fn tgv(n_side: usize) -> Self {
        Self {
            scenario: Scenario::Tgv,
            domain: DomainSpec::tgv(),
            dx: 1.0 / n_side as f64,
            reference_velocity: 1.0,
            reference_length: 1.0,
            viscosity: 0.01,
            rest_density: 1.0,
            dt: 0.001,
            frames: 100,
            stride: 10,
            warmup: 0.0,
            force: 0.0,
            jitter: 0.2,
            relax_steps: 400,
            sound_speed_factor: 10.0,
            background_pressure_factor: 1.0,
        }
    }

    /// Reverse Poiseuille flow in the `1 x 2 x 0.5` box. The default force
    /// `8 nu U / (Ly/2)^2` gives a laminar peak velocity of `U`.
    pub fn rpf(dx: f64) -> Self {
        let viscosity = 0.01;
        let half_height: f64 = 1.0;
        Self {
            scenario: Scenario::Rpf,
            domain: DomainSpec::rpf(),
            dx,
            reference_velocity: 1.0,
            reference_length: 1.0,
            viscosity,
            rest_density: 1.0,
            dt: 0.001,
            frames: 10_000,
            stride: 10,
            warmup: 60.0,
            force: 8.0 * viscosity / half_height.powi(2),
            jitter: 0.0,
            relax_steps: 0,
            sound_speed_factor: 10.0,
            background_pressure_factor: 1.0,
        }
    }

    pub fn reynolds(&self) -> f64 {
        self.reference_velocity * self.reference_length / (self.viscosity / self.rest_density)
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed_factor * self.reference_velocity
    }

    pub fn reference_pressure(&self) -> f64 {
        self.rest_density * self.sound_speed().powi(2)
    }

    pub fn background_pressure(&self) -> f64 {
        self.background_pressure_factor * self.reference_pressure()
    }

    pub fn smoothing_length(&self) -> f64 {
        self.dx
    }

    pub fn kernel_radius(&self) -> f64 {
        3.0 * self.smoothing_length()
    }

    /// Particles along each axis.
    pub fn lattice(&self) -> [usize; 3] {
        self.domain.lengths.map(|l| (l / self.dx).round() as usize)
    }

    pub fn num_particles(&self) -> usize {
        self.lattice().iter().product()
    }

    pub fn frame_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }

    /// Largest stable step from the acoustic, viscous and body-force limits.
    pub fn max_stable_dt(&self) -> f64 {
        let h = self.smoothing_length();
        let acoustic = 0.25 * h / (self.sound_speed() + self.reference_velocity);
        let nu = self.viscosity / self.rest_density;
        let viscous = if nu > 0.0 { 0.125 * h * h / nu } else { f64::INFINITY };
        let body = if self.force > 0.0 { 0.25 * (h / self.force).sqrt() } else { f64::INFINITY };
        acoustic.min(viscous).min(body)
    }

    pub fn validate(&self) -> Result<()> {
        DomainSpec::new(self.domain.lengths)?;
        let positive = [
            ("dx", self.dx),
            ("reference_velocity", self.reference_velocity),
            ("reference_length", self.reference_length),
            ("viscosity", self.viscosity),
            ("rest_density", self.rest_density),
            ("dt", self.dt),
            ("sound_speed_factor", self.sound_speed_factor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.frames == 0 || self.stride == 0 {
            return Err(Error::Config("frames and stride must be positive".into()));
        }
        if !self.warmup.is_finite() || self.warmup < 0.0 || self.force < 0.0 || !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config("warmup/force must be >= 0 and jitter in [0, 0.5)".into()));
        }
        for (d, &n) in self.lattice().iter().enumerate() {
            let l = self.domain.lengths[d];
            if n == 0 || ((n as f64) * self.dx - l).abs() > 1e-9 * l {
                return Err(Error::Config(format!("dx {} does not tile box length {l}", self.dx)));
            }
        }
        if self.kernel_radius() > self.domain.min_length() / 2.0 {
            return Err(Error::Config(format!(
                "kernel support {} exceeds half the smallest box length",
                self.kernel_radius()
            )));
        }
        let limit = self.max_stable_dt();
        if self.dt > limit {
            return Err(Error::Config(format!(
                "dt = {} violates the stability bound dt <= {limit:.3e} (acoustic/viscous/body-force)",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Initial Taylor-Green field with `k = 2 pi / L`; `w` is zero.
pub fn tgv_velocity(p: Vec3, length: f64) -> Vec3 {
    let k = 2.0 * PI / length;
    let (sx, cx) = (k * p[0]).sin_cos();
    let (sy, cy) = (k * p[1]).sin_cos();
    let cz = (k * p[2]).cos();
    [sx * cy * cz, -cx * sy * cz, 0.0]
}

/// Reverse Poiseuille forcing: `-f` along x in the upper half (`y >= Ly/2`),
/// `+f` in the lower half.
pub fn rpf_accel(p: Vec3, domain: &DomainSpec, magnitude: f64) -> Vec3 {
    if p[1] >= domain.lengths[1] / 2.0 {
        [-magnitude, 0.0, 0.0]
    } else {
        [magnitude, 0.0, 0.0]
    }
}

fn lattice_positions(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let [nx, ny, nz] = config.lattice();
    let amp = config.jitter * config.dx;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let mut p = [
                    (i as f64 + 0.5) * config.dx,
                    (j as f64 + 0.5) * config.dx,
                    (k as f64 + 0.5) * config.dx,
                ];
                if amp > 0.0 {
                    for x in p.iter_mut() {
                        *x += rng.random_range(-amp..=amp);
                    }
                }
                out.push(config.domain.wrap(p));
            }
        }
    }
    out
}

fn base_state(config: &ScenarioConfig, positions: Vec<Vec3>) -> ParticleState {
    let n = positions.len();
    let mass = config.rest_density * config.domain.volume() / n as f64;
    ParticleState {
        velocities: vec![[0.0; 3]; n],
        transport_velocities: vec![[0.0; 3]; n],
        densities: vec![config.rest_density; n],
        masses: vec![mass; n],
        external: vec![[0.0; 3]; n],
        positions,
    }
}

/// Pushes a disordered particle set towards uniform density with damped
/// steps: velocities are zeroed before every step, so only the pressure and
/// background-pressure shifts move particles.
pub fn relax_positions(config: &ScenarioConfig, mut state: ParticleState, steps: usize) -> Result<ParticleState> {
    if steps == 0 {
        return Ok(state);
    }
    let mut relax = config.clone();
    relax.scenario = Scenario::Tgv;
    relax.force = 0.0;
    let n = state.len();
    let external = std::mem::replace(&mut state.external, vec![[0.0; 3]; n]);
    let mut solver = SphSolver::new(relax)?;
    for _ in 0..steps {
        state.velocities.iter_mut().for_each(|v| *v = [0.0; 3]);
        state.transport_velocities.iter_mut().for_each(|v| *v = [0.0; 3]);
        state = solver.step(&state)?;
    }
    state.velocities.iter_mut().for_each(|v| *v = [0.0; 3]);
    state.transport_velocities.iter_mut().for_each(|v| *v = [0.0; 3]);
    state.external = external;
    Ok(state)
}

/// Relaxed random particle set carrying the Taylor-Green field, with the
/// net momentum removed so the unforced flow has zero mean velocity.
pub fn tgv_init(config: &ScenarioConfig, seed: u64) -> Result<ParticleState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = lattice_positions(config, &mut rng);
    let mut state = relax_positions(config, base_state(config, positions), config.relax_steps)?;
    let n = state.len() as f64;
    let mut mean = [0.0; 3];
    for (v, p) in state.velocities.iter_mut().zip(&state.positions) {
        let u = tgv_velocity(*p, config.reference_length);
        *v = [u[0] * config.reference_velocity, u[1] * config.reference_velocity, 0.0];
        for d in 0..3 {
            mean[d] += v[d] / n;
        }
    }
    for v in state.velocities.iter_mut() {
        for d in 0..3 {
            v[d] -= mean[d];
        }
    }
    state.transport_velocities = state.velocities.clone();
    Ok(state)
}

/// Fluid at rest with the opposed body force.
pub fn rpf_init(config: &ScenarioConfig, seed: u64) -> Result<ParticleState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = lattice_positions(config, &mut rng);
    let mut state = relax_positions(config, base_state(config, positions), config.relax_steps)?;
    for (f, p) in state.external.iter_mut().zip(&state.positions) {
        *f = rpf_accel(*p, &config.domain, config.force);
    }
    Ok(state)
}

pub fn initial_state(config: &ScenarioConfig, seed: u64) -> Result<ParticleState> {
    match config.scenario {
        Scenario::Tgv => tgv_init(config, seed),
        Scenario::Rpf => rpf_init(config, seed),
    }
}
