use super::kernel::QuinticKernel;
use super::scenario::{rpf_accel, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::neighbors::{build_edges, EdgeList};
use crate::vec3::{norm2, Vec3};

/// State of all particles at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub transport_velocities: Vec<Vec3>,
    pub densities: Vec<f64>,
    pub masses: Vec<f64>,
    /// External body accelerations.
    pub external: Vec<Vec3>,
}

impl ParticleState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).chain(&self.transport_velocities).all(|v| v.iter().all(|x| x.is_finite()))
            && self.densities.iter().all(|r| r.is_finite() && *r > 0.0)
    }
}

/// `sum_i m_i u_i`.
pub fn momentum(state: &ParticleState) -> Vec3 {
    let mut m = [0.0; 3];
    for (v, &mass) in state.velocities.iter().zip(&state.masses) {
        for d in 0..3 {
            m[d] += mass * v[d];
        }
    }
    m
}

/// `sum_i m_i |u_i|^2 / 2`.
pub fn kinetic_energy(state: &ParticleState) -> f64 {
    state.velocities.iter().zip(&state.masses).map(|(v, &m)| 0.5 * m * norm2(*v)).sum()
}

/// One symplectic-Euler step. `edges` must be built on `state.positions`
/// with the kernel support radius.
pub fn sph_step(state: &ParticleState, config: &ScenarioConfig, edges: &EdgeList) -> Result<ParticleState> {
    let dt = config.dt;
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let n = state.len();
    if edges.num_nodes() != n {
        return Err(Error::Shape(format!("edge list covers {} nodes, state has {n}", edges.num_nodes())));
    }
    let kernel = QuinticKernel::new(config.smoothing_length());
    let rho0 = config.rest_density;
    let p0 = config.reference_pressure();
    let pb = config.background_pressure();
    let eta = config.viscosity;
    let w0 = kernel.w(0.0);

    let densities: Vec<f64> = crate::par::map_range(n, |i| {
        let mut rho = state.masses[i] * w0;
        for e in edges.offsets[i]..edges.offsets[i + 1] {
            rho += state.masses[edges.senders[e]] * kernel.w(edges.distances[e]);
        }
        rho
    });
    let pressures: Vec<f64> = densities.iter().map(|&rho| p0 * (rho / rho0 - 1.0)).collect();

    // A_i = rho_i u_i (u~_i - u_i)^T
    let stress: Vec<[[f64; 3]; 3]> = crate::par::map_range(n, |i| {
        let u = state.velocities[i];
        let ut = state.transport_velocities[i];
        let mut a = [[0.0; 3]; 3];
        for (r, row) in a.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = densities[i] * u[r] * (ut[c] - u[c]);
            }
        }
        a
    });

    let forces: Vec<(Vec3, Vec3)> = crate::par::map_range(n, |i| {
        let mi = state.masses[i];
        let rho_i = densities[i];
        let vi = mi / rho_i;
        let ui = state.velocities[i];
        let mut acc = [0.0; 3];
        let mut bg = [0.0; 3];
        for e in edges.offsets[i]..edges.offsets[i + 1] {
            let j = edges.senders[e];
            let r = edges.distances[e];
            if r <= 0.0 {
                continue;
            }
            let d = edges.displacements[e];
            let dwdr = kernel.grad(r);
            let grad = [dwdr * d[0] / r, dwdr * d[1] / r, dwdr * d[2] / r];
            let rho_j = densities[j];
            let vj = state.masses[j] / rho_j;
            let vol = vi * vi + vj * vj;
            let p_ij = (rho_j * pressures[i] + rho_i * pressures[j]) / (rho_i + rho_j);
            let uj = state.velocities[j];
            let visc = eta * dwdr / r;
            for a in 0..3 {
                let mut s = 0.0;
                for b in 0..3 {
                    s += 0.5 * (stress[i][a][b] + stress[j][a][b]) * grad[b];
                }
                acc[a] += vol * (-p_ij * grad[a] + s + visc * (ui[a] - uj[a]));
                bg[a] += vol * grad[a];
            }
        }
        let ext = state.external[i];
        (
            [acc[0] / mi + ext[0], acc[1] / mi + ext[1], acc[2] / mi + ext[2]],
            [-pb * bg[0] / mi, -pb * bg[1] / mi, -pb * bg[2] / mi],
        )
    });

    let mut next = ParticleState {
        positions: Vec::with_capacity(n),
        velocities: Vec::with_capacity(n),
        transport_velocities: Vec::with_capacity(n),
        densities,
        masses: state.masses.clone(),
        external: state.external.clone(),
    };
    for (i, (acc, bg)) in forces.into_iter().enumerate() {
        let u = state.velocities[i];
        let un = [u[0] + dt * acc[0], u[1] + dt * acc[1], u[2] + dt * acc[2]];
        let ut = [un[0] + dt * bg[0], un[1] + dt * bg[1], un[2] + dt * bg[2]];
        let p = state.positions[i];
        let x = config.domain.wrap([p[0] + dt * ut[0], p[1] + dt * ut[1], p[2] + dt * ut[2]]);
        next.velocities.push(un);
        next.transport_velocities.push(ut);
        next.positions.push(x);
    }
    if config.scenario == Scenario::Rpf {
        for (f, p) in next.external.iter_mut().zip(&next.positions) {
            *f = rpf_accel(*p, &config.domain, config.force);
        }
    }
    Ok(next)
}

/// Owns a configuration and advances states, rebuilding neighbors each step.
#[derive(Clone, Debug)]
pub struct SphSolver {
    pub config: ScenarioConfig,
    steps: usize,
}

impl SphSolver {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, steps: 0 })
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, state: &ParticleState) -> Result<ParticleState> {
        let edges = build_edges(&state.positions, &self.config.domain, self.config.kernel_radius())?;
        let next = sph_step(state, &self.config, &edges)?;
        self.steps += 1;
        if !next.is_finite() {
            return Err(Error::BlowUp { step: self.steps, reason: "non-finite particle state".into() });
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::super::scenario::tgv_init;
    use super::*;

    fn rest_lattice(n_side: usize) -> (ScenarioConfig, ParticleState) {
        let mut config = ScenarioConfig::tgv(n_side);
        config.jitter = 0.0;
        config.relax_steps = 0;
        let mut state = tgv_init(&config, 0).unwrap();
        state.velocities.iter_mut().for_each(|v| *v = [0.0; 3]);
        state.transport_velocities = state.velocities.clone();
        (config, state)
    }

    #[test]
    fn zero_dt_leaves_state_unchanged() {
        let (mut config, state) = rest_lattice(8);
        config.dt = 0.0;
        let edges = build_edges(&state.positions, &config.domain, config.kernel_radius()).unwrap();
        assert_eq!(sph_step(&state, &config, &edges).unwrap(), state);
    }

    #[test]
    fn rest_lattice_stays_at_rest() {
        let (config, state) = rest_lattice(8);
        let mut solver = SphSolver::new(config.clone()).unwrap();
        let next = solver.step(&state).unwrap();
        let c0 = config.sound_speed();
        for v in &next.velocities {
            assert!(v.iter().all(|x| x.abs() < 1e-9 * c0), "{v:?}");
        }
    }

    #[test]
    fn kernel_partition_of_unity_on_lattice() {
        let (config, state) = rest_lattice(10);
        let edges = build_edges(&state.positions, &config.domain, config.kernel_radius()).unwrap();
        let kernel = QuinticKernel::new(config.smoothing_length());
        let vol = config.dx.powi(3);
        for i in [0, 17, 999] {
            let mut s = vol * kernel.w(0.0);
            for e in edges.offsets[i]..edges.offsets[i + 1] {
                s += vol * kernel.w(edges.distances[e]);
            }
            assert!((s - 1.0).abs() < 0.02, "partition sum {s}");
        }
    }
}
