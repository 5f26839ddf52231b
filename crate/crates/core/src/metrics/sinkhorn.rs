use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::DomainSpec;
use crate::par;
use crate::vec3::{norm2, Vec3};

/// Entropic regularization and stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornConfig {
    /// Regularization strength, in squared length units.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once the summed L1 marginal violation falls below this.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: 1e-3, max_iters: 500, tol: 1e-6 }
    }
}

/// Value of a Sinkhorn divergence with convergence diagnostics of its
/// three constituent problems (worst case reported).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornResult {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub marginal_error: f64,
}

/// Dense cost matrix and its transpose.
struct Costs {
    n: usize,
    m: usize,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

impl Costs {
    fn new(x: &[Vec3], y: &[Vec3], domain: &DomainSpec) -> Self {
        let (n, m) = (x.len(), y.len());
        let rows: Vec<f64> = par::map_range(n, |i| y.iter().map(|&yj| norm2(domain.min_image(x[i], yj))).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect();
        let mut cols = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                cols[j * n + i] = rows[i * m + j];
            }
        }
        Self { n, m, rows, cols }
    }
}

/// `out_i = -eps log( (1/len(pot)) sum_j exp((pot_j - C_ij) / eps) )` for
/// each row `C_i` of `cost` (row width `pot.len()`).
fn soft_min(cost: &[f64], pot: &[f64], eps: f64) -> Vec<f64> {
    let m = pot.len();
    let rows = cost.len() / m.max(1);
    let log_w = -(m as f64).ln();
    let inv = 1.0 / eps;
    par::map_range(rows, |i| {
        let c = &cost[i * m..(i + 1) * m];
        let mut best = f64::NEG_INFINITY;
        for (p, cij) in pot.iter().zip(c) {
            best = best.max((p - cij) * inv);
        }
        let s: f64 = pot.iter().zip(c).map(|(p, cij)| ((p - cij) * inv - best).exp()).sum();
        -eps * (s.ln() + best + log_w)
    })
}

/// Squared half-diagonal of the box: no minimum-image displacement is longer.
fn squared_diameter(domain: &DomainSpec) -> f64 {
    domain.lengths.iter().map(|l| (l / 2.0).powi(2)).sum()
}

/// Entropic OT cost between uniform point clouds: alternating log-domain
/// Sinkhorn updates, annealing epsilon geometrically from the squared box
/// diameter to its target value.
fn entropic_ot(x: &[Vec3], y: &[Vec3], domain: &DomainSpec, cfg: &SinkhornConfig) -> SinkhornResult {
    let c = Costs::new(x, y, domain);
    let (n, m) = (c.n, c.m);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut eps = squared_diameter(domain).max(cfg.epsilon);
    let mut iterations = 0;
    let mut error = f64::INFINITY;
    loop {
        f = soft_min(&c.rows, &g, eps);
        g = soft_min(&c.cols, &f, eps);
        iterations += 1;
        if eps > cfg.epsilon {
            eps = (eps * 0.5).max(cfg.epsilon);
        } else {
            // Columns are matched exactly after the g update; measure rows.
            let tf = soft_min(&c.rows, &g, eps);
            error = f.iter().zip(&tf).map(|(a, b)| (((a - b) / eps).exp() - 1.0).abs()).sum::<f64>() / n as f64;
            if error < cfg.tol {
                break;
            }
        }
        if iterations >= cfg.max_iters {
            break;
        }
    }
    let value = f.iter().sum::<f64>() / n as f64 + g.iter().sum::<f64>() / m as f64;
    SinkhornResult { value, converged: error < cfg.tol, iterations, marginal_error: error }
}

/// Entropic OT of a cloud with itself. The optimal potentials coincide, so
/// the averaged fixed-point update `f <- (f + T(f)) / 2` is used; it
/// converges much faster than alternating updates on this symmetric problem.
fn entropic_self_ot(x: &[Vec3], domain: &DomainSpec, cfg: &SinkhornConfig) -> SinkhornResult {
    let c = Costs::new(x, x, domain);
    let n = c.n;
    let mut f = vec![0.0; n];
    let mut eps = squared_diameter(domain).max(cfg.epsilon);
    let mut iterations = 0;
    let mut error = f64::INFINITY;
    loop {
        let tf = soft_min(&c.rows, &f, eps);
        iterations += 1;
        if eps <= cfg.epsilon {
            error = f.iter().zip(&tf).map(|(a, b)| (((a - b) / eps).exp() - 1.0).abs()).sum::<f64>() / n as f64;
        }
        f.iter_mut().zip(&tf).for_each(|(a, b)| *a = 0.5 * (*a + b));
        if eps > cfg.epsilon {
            eps = (eps * 0.5).max(cfg.epsilon);
        } else if error < cfg.tol || iterations >= cfg.max_iters {
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
    }
    let tf = soft_min(&c.rows, &f, eps);
    let value = 2.0 * tf.iter().sum::<f64>() / n as f64;
    SinkhornResult { value, converged: error < cfg.tol, iterations, marginal_error: error }
}

/// Points in lexicographic order, making results independent of labeling.
fn canonical(points: &[Vec3]) -> Vec<Vec3> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    p
}

fn lex_cmp(a: &[Vec3], b: &[Vec3]) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Debiased Sinkhorn divergence `OT(A,B) - OT(A,A)/2 - OT(B,B)/2` with
/// uniform weights and squared minimum-image cost.
pub fn sinkhorn_distance(a: &[Vec3], b: &[Vec3], domain: &DomainSpec, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Shape("Sinkhorn needs non-empty point sets".into()));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) || cfg.max_iters == 0 || !(cfg.tol >= 0.0) {
        return Err(Error::Config("Sinkhorn needs a positive epsilon, max_iters >= 1 and a non-negative tol".into()));
    }
    if a.iter().chain(b).flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Sinkhorn input".into()));
    }
    // Canonical order of points and of the pair itself makes the result
    // exactly invariant to relabeling and to swapping the arguments.
    let (mut a, mut b) = (canonical(a), canonical(b));
    if lex_cmp(&a, &b).is_gt() {
        std::mem::swap(&mut a, &mut b);
    }
    let aa = entropic_self_ot(&a, domain, cfg);
    let bb = entropic_self_ot(&b, domain, cfg);
    // Identical clouds pose the self problem again; reuse its solution.
    let ab = if a == b { aa } else { entropic_ot(&a, &b, domain, cfg) };
    Ok(SinkhornResult {
        value: ab.value - 0.5 * aa.value - 0.5 * bb.value,
        converged: ab.converged && aa.converged && bb.converged,
        iterations: ab.iterations.max(aa.iterations).max(bb.iterations),
        marginal_error: ab.marginal_error.max(aa.marginal_error).max(bb.marginal_error),
    })
}

/// Largest instance accepted by [`exact_ot`].
pub const EXACT_OT_MAX_POINTS: usize = 8;

/// Exact optimal transport between equal-size uniform point sets: the
/// minimum over assignments of the mean squared minimum-image distance.
pub fn exact_ot(a: &[Vec3], b: &[Vec3], domain: &DomainSpec) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::Shape(format!("exact OT needs equal sizes, got {n} and {}", b.len())));
    }
    if n > EXACT_OT_MAX_POINTS {
        return Err(Error::SizeLimit(format!("exact OT limited to {EXACT_OT_MAX_POINTS} points, got {n}")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let cost: Vec<Vec<f64>> = a.iter().map(|&x| b.iter().map(|&y| norm2(domain.min_image(x, y))).collect()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &cost, 0.0, &mut best);
    Ok(best / n as f64)
}

fn permute(perm: &mut [usize], k: usize, cost: &[Vec<f64>], partial: f64, best: &mut f64) {
    if partial >= *best {
        return;
    }
    if k == perm.len() {
        *best = partial;
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, cost, partial + cost[k][perm[k]], best);
        perm.swap(k, i);
    }
}
