use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::models::GraphSample;
use crate::neighbors::build_edges;
use crate::vec3::{add, sub, Vec3};

/// Random-walk input noise.
///
/// Each of the `H` history velocities receives the running sum of i.i.d.
/// `N(0, std / sqrt(H))` increments, so the most recent one carries noise of
/// standard deviation `std` per component. The current position moves by the
/// sum of all velocity perturbations, keeping `v^(h) = p^(h) - p^(h-1)`
/// consistent along the perturbed history, and the target is corrected so
/// that integrating the perturbed state with it lands on the true next
/// position. Edges are rebuilt for the perturbed positions.
pub fn add_noise(sample: &GraphSample, std: f64, seed: u64) -> Result<GraphSample> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::Config(format!("noise std must be a non-negative number, got {std}")));
    }
    if std == 0.0 {
        return Ok(sample.clone());
    }
    let h = sample.history();
    let dist = Normal::new(0.0, std / (h as f64).sqrt()).expect("positive finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = sample.clone();
    for i in 0..sample.num_nodes() {
        let mut walk = [0.0; 3];
        let mut shift = [0.0; 3];
        for k in 0..h {
            for c in walk.iter_mut() {
                *c += dist.sample(&mut rng);
            }
            out.velocities[k][i] = add(out.velocities[k][i], walk);
            shift = add(shift, walk);
        }
        out.positions[i] = sample.domain.wrap(add(sample.positions[i], shift));
        if let Some(t) = out.target.as_mut() {
            t[i] = sub(sub(t[i], shift), walk);
        }
    }
    out.edges = build_edges(&out.positions, &out.domain, out.radius)?;
    Ok(out)
}

/// Per-particle perturbation of the last velocity, for diagnostics.
pub fn last_velocity_noise(clean: &GraphSample, noisy: &GraphSample) -> Vec<Vec3> {
    let (a, b) = (clean.velocities.last(), noisy.velocities.last());
    match (a, b) {
        (Some(a), Some(b)) => b.iter().zip(a).map(|(&x, &y)| sub(x, y)).collect(),
        _ => Vec::new(),
    }
}
