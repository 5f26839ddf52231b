//! Periodic fixed-radius neighbor search on a cell list.
//!
//! Cells are at least as wide as the cutoff, so every neighbor of a particle
//! lives in the 27-cell stencil around its own cell. Small grids (fewer than
//! three cells along an axis) deduplicate wrapped stencil entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{norm, Vec3};

/// Periodic box `[0, Lx) x [0, Ly) x [0, Lz)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lengths: [f64; 3],
    #[serde(default = "all_periodic")]
    pub periodic: [bool; 3],
}

fn all_periodic() -> [bool; 3] {
    [true; 3]
}

impl DomainSpec {
    pub fn new(lengths: [f64; 3]) -> Result<Self> {
        if lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::Config(format!("box lengths must be positive, got {lengths:?}")));
        }
        Ok(Self { lengths, periodic: [true; 3] })
    }

    /// Unit cube used by the Taylor-Green vortex.
    pub fn tgv() -> Self {
        Self { lengths: [1.0, 1.0, 1.0], periodic: [true; 3] }
    }

    /// `1 x 2 x 0.5` box used by the reverse Poiseuille flow.
    pub fn rpf() -> Self {
        Self { lengths: [1.0, 2.0, 0.5], periodic: [true; 3] }
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn min_length(&self) -> f64 {
        self.lengths.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Maps a position into the box.
    pub fn wrap(&self, p: Vec3) -> Vec3 {
        let mut out = p;
        for d in 0..3 {
            let l = self.lengths[d];
            let mut x = p[d] - l * (p[d] / l).floor();
            if x >= l {
                x -= l;
            }
            out[d] = x;
        }
        out
    }

    /// Shortest periodic image of `a - b`.
    pub fn min_image(&self, a: Vec3, b: Vec3) -> Vec3 {
        let mut d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        for (k, x) in d.iter_mut().enumerate() {
            let l = self.lengths[k];
            *x -= l * (*x / l).round();
        }
        d
    }
}

/// Directed edges grouped by receiver; within a group, ordered
/// lexicographically by displacement.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeList {
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    /// Minimum-image `p_receiver - p_sender`.
    pub displacements: Vec<Vec3>,
    pub distances: Vec<f64>,
    /// `offsets[i]..offsets[i+1]` are the edges received by node `i`.
    pub offsets: Vec<usize>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }
}

struct CellGrid {
    dims: [usize; 3],
    cell: [f64; 3],
    starts: Vec<usize>,
    members: Vec<usize>,
}

impl CellGrid {
    fn new(positions: &[Vec3], domain: &DomainSpec, radius: f64) -> Self {
        let mut dims = [1usize; 3];
        let mut cell = [0.0; 3];
        for d in 0..3 {
            dims[d] = ((domain.lengths[d] / radius).floor() as usize).max(1);
            cell[d] = domain.lengths[d] / dims[d] as f64;
        }
        let n_cells = dims.iter().product::<usize>();
        let mut counts = vec![0usize; n_cells + 1];
        let ids: Vec<usize> = positions
            .iter()
            .map(|p| {
                let c = Self::coords_of(p, &cell, &dims);
                (c[0] * dims[1] + c[1]) * dims[2] + c[2]
            })
            .collect();
        for &id in &ids {
            counts[id + 1] += 1;
        }
        for k in 0..n_cells {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut members = vec![0usize; positions.len()];
        for (i, &id) in ids.iter().enumerate() {
            members[fill[id]] = i;
            fill[id] += 1;
        }
        Self { dims, cell, starts: counts, members }
    }

    fn coords_of(p: &Vec3, cell: &[f64; 3], dims: &[usize; 3]) -> [usize; 3] {
        let mut c = [0usize; 3];
        for d in 0..3 {
            c[d] = ((p[d] / cell[d]).floor().max(0.0) as usize).min(dims[d] - 1);
        }
        c
    }

    fn stencil(&self, p: &Vec3) -> Vec<usize> {
        let c = Self::coords_of(p, &self.cell, &self.dims);
        let axis = |d: usize| -> Vec<usize> {
            let n = self.dims[d] as isize;
            let mut v: Vec<usize> = (-1..=1).map(|o| (c[d] as isize + o).rem_euclid(n) as usize).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut out = Vec::with_capacity(27);
        for &x in &xs {
            for &y in &ys {
                for &z in &zs {
                    out.push((x * self.dims[1] + y) * self.dims[2] + z);
                }
            }
        }
        out
    }
}

/// All ordered pairs `(sender, receiver)` with minimum-image distance
/// strictly below `radius`, excluding self pairs.
pub fn build_edges(positions: &[Vec3], domain: &DomainSpec, radius: f64) -> Result<EdgeList> {
    if !(radius > 0.0) || radius > domain.min_length() / 2.0 {
        return Err(Error::Config(format!(
            "radius {radius} must be in (0, {}] for the minimum-image convention",
            domain.min_length() / 2.0
        )));
    }
    if let Some(i) = positions.iter().position(|p| p.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite(format!("position of particle {i}")));
    }
    let wrapped: Vec<Vec3> = positions.iter().map(|&p| domain.wrap(p)).collect();
    let grid = CellGrid::new(&wrapped, domain, radius);
    let r2 = radius * radius;

    let per_node = crate::par::map_range(wrapped.len(), |i| {
        let pi = wrapped[i];
        let mut found: Vec<(usize, Vec3, f64)> = Vec::new();
        for cell in grid.stencil(&pi) {
            for &j in &grid.members[grid.starts[cell]..grid.starts[cell + 1]] {
                if j == i {
                    continue;
                }
                let d = domain.min_image(pi, wrapped[j]);
                let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if d2 < r2 {
                    found.push((j, d, norm(d)));
                }
            }
        }
        // Geometric order (not index order) makes every per-receiver sum
        // independent of particle labels, so models are bitwise
        // permutation-equivariant.
        found.sort_unstable_by(|a, b| {
            a.1[0].total_cmp(&b.1[0]).then(a.1[1].total_cmp(&b.1[1])).then(a.1[2].total_cmp(&b.1[2])).then(a.0.cmp(&b.0))
        });
        found
    });

    let total: usize = per_node.iter().map(Vec::len).sum();
    let mut edges = EdgeList {
        senders: Vec::with_capacity(total),
        receivers: Vec::with_capacity(total),
        displacements: Vec::with_capacity(total),
        distances: Vec::with_capacity(total),
        offsets: Vec::with_capacity(wrapped.len() + 1),
    };
    edges.offsets.push(0);
    for (i, list) in per_node.into_iter().enumerate() {
        for (j, d, r) in list {
            edges.senders.push(j);
            edges.receivers.push(i);
            edges.displacements.push(d);
            edges.distances.push(r);
        }
        edges.offsets.push(edges.senders.len());
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(positions: &[Vec3], domain: &DomainSpec, radius: f64) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..positions.len() {
            for j in 0..positions.len() {
                if i == j {
                    continue;
                }
                let mut d2 = 0.0;
                for k in 0..3 {
                    let l = domain.lengths[k];
                    let mut x = (positions[i][k] - positions[j][k]).abs() % l;
                    if x > l / 2.0 {
                        x = l - x;
                    }
                    d2 += x * x;
                }
                if d2 < radius * radius {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    #[test]
    fn wraps_across_boundary() {
        let domain = DomainSpec::tgv();
        let edges = build_edges(&[[0.01, 0.5, 0.5], [0.99, 0.5, 0.5]], &domain, 0.075).unwrap();
        assert_eq!(edges.len(), 2);
        assert!((edges.distances[0] - 0.02).abs() < 1e-12);
        // receiver 0 at x=0.01, sender 1 at x=0.99: p_r - p_s = +0.02
        assert!((edges.displacements[0][0] - 0.02).abs() < 1e-12);
    }

    #[test]
    fn single_particle_has_no_edges() {
        let edges = build_edges(&[[0.5; 3]], &DomainSpec::tgv(), 0.1).unwrap();
        assert!(edges.is_empty());
        assert_eq!(edges.offsets, vec![0, 0]);
    }

    #[test]
    fn rejects_large_radius_and_nan() {
        let domain = DomainSpec::rpf();
        assert!(build_edges(&[[0.1; 3]], &domain, 0.3).is_err());
        assert!(build_edges(&[[f64::NAN, 0.0, 0.0]], &domain, 0.1).is_err());
    }

    #[test]
    fn matches_brute_force_in_anisotropic_box() {
        let domain = DomainSpec::rpf();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let positions: Vec<Vec3> = (0..300)
            .map(|_| [rng.random::<f64>(), 2.0 * rng.random::<f64>(), 0.5 * rng.random::<f64>()])
            .collect();
        let edges = build_edges(&positions, &domain, 0.2).unwrap();
        let mut got: Vec<(usize, usize)> = edges.receivers.iter().cloned().zip(edges.senders.iter().cloned()).collect();
        got.sort_unstable();
        let mut want = brute_force(&positions, &domain, 0.2);
        want.sort_unstable();
        assert_eq!(got, want);
    }
}
