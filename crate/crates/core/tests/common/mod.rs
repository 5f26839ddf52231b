//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;
pub mod strategies;

use lagfluid::vec3::{Mat3, Vec3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniformly random proper rotation (unit quaternion from a 4D Gaussian).
pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    let q: [f64; 4] = std::array::from_fn(|_| normal(rng));
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Random element of O(3): a rotation, composed with inversion half the time.
pub fn random_orthogonal<R: Rng>(rng: &mut R) -> Mat3 {
    let r = random_rotation(rng);
    if rng.random::<bool>() {
        r.map(|row| row.map(|x| -x))
    } else {
        r
    }
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, scale: f64) -> Vec3 {
    std::array::from_fn(|_| scale * normal(rng))
}

pub fn gaussian_vec_n<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

pub fn uniform_points<R: Rng>(rng: &mut R, n: usize, lengths: [f64; 3]) -> Vec<Vec3> {
    (0..n).map(|_| std::array::from_fn(|d| rng.random::<f64>() * lengths[d])).collect()
}

pub fn pass_line(name: &str, ok: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

use lagfluid::models::GraphSample;
use lagfluid::neighbors::{build_edges, DomainSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random particle cloud in the unit box with small random velocities,
/// forces and targets, connected at radius 0.3.
pub fn random_sample(n: usize, history: usize, seed: u64) -> GraphSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = DomainSpec::tgv();
    let positions = uniform_points(&mut rng, n, [1.0; 3]);
    let velocities = (0..history).map(|_| (0..n).map(|_| gaussian_vec(&mut rng, 0.01)).collect()).collect();
    let force = (0..n).map(|_| gaussian_vec(&mut rng, 0.001)).collect();
    let target = Some((0..n).map(|_| gaussian_vec(&mut rng, 0.001)).collect());
    let radius = 0.3;
    let edges = build_edges(&positions, &domain, radius).unwrap();
    GraphSample { positions, velocities, force, domain, radius, edges, target }
}

/// Applies `r` to every vector input (velocities, force, edge
/// displacements, targets). Positions are left alone: the models see them
/// only through the displacements.
pub fn transform_sample(s: &GraphSample, r: &Mat3) -> GraphSample {
    use lagfluid::vec3::mat_vec;
    let rot = |v: &Vec<Vec3>| v.iter().map(|x| mat_vec(r, *x)).collect::<Vec<_>>();
    let mut out = s.clone();
    out.velocities = s.velocities.iter().map(rot).collect();
    out.force = rot(&s.force);
    out.edges.displacements = rot(&s.edges.displacements);
    out.target = s.target.as_ref().map(rot);
    out
}

/// Relabels particles: new particle `k` is old particle `perm[k]`.
pub fn permute_sample(s: &GraphSample, perm: &[usize]) -> GraphSample {
    let pick = |v: &Vec<Vec3>| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let positions = pick(&s.positions);
    GraphSample {
        edges: build_edges(&positions, &s.domain, s.radius).unwrap(),
        positions,
        velocities: s.velocities.iter().map(pick).collect(),
        force: pick(&s.force),
        domain: s.domain,
        radius: s.radius,
        target: s.target.as_ref().map(pick),
    }
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    perm
}

/// Short, cheaply initialized TGV trajectory for model-level tests.
pub fn small_tgv(n_side: usize, frames: usize, seed: u64) -> lagfluid::sph::Trajectory {
    let mut config = lagfluid::sph::ScenarioConfig::tgv(n_side);
    config.frames = frames;
    config.relax_steps = 50;
    lagfluid::sph::generate_trajectory(&config, seed).unwrap()
}
