//! Independent brute-force and quadrature oracles.
//!
//! Everything in this module validates closed-form identities from the
//! outside: discrete path enumeration against the combinatorial path-count
//! formula, Monte Carlo event frequencies against the finite-time joint
//! density, finite differences against the closed-form Jacobian, and
//! adaptive cubature against every Gaussian identity. The oracles are slow
//! by design and drive the verification suite rather than production paths.

pub mod quadrature;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{IntegerCurrent, WeightedGraph};
use crate::simulate::{simulate_two_scales, trajectory_rng, LastExit, ObservableRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("path enumeration budget exceeded: total crossings {0} > {1}")]
    PathBudgetExceeded(u64, u64),
    #[error("point too close to the simplex boundary for finite differences")]
    SingularPoint,
    #[error("local times must be positive and sum to the window lengths")]
    InvalidLocalTimes,
}

/// Total-crossings cap for exhaustive path enumeration.
pub const PATH_ENUMERATION_BUDGET: u64 = 14;

/// Last-exit structure of a finished discrete path: for every vertex with at
/// least one departure except the endpoint, its final departure `(from, to)`,
/// sorted by `from`.
pub type LastExitKey = Vec<(usize, usize)>;

/// Depth-first enumeration of every discrete path from `i0` to `i1` that
/// crosses each directed edge exactly `k` times, grouped by last-exit
/// structure. Exact counts; exponential cost, guarded by the budget.
pub fn enumerate_paths(
    g: &WeightedGraph,
    i0: usize,
    i1: usize,
    k: &IntegerCurrent,
) -> Result<BTreeMap<LastExitKey, u64>, OracleError> {
    let total: u64 = k.values.iter().sum();
    if total > PATH_ENUMERATION_BUDGET {
        return Err(OracleError::PathBudgetExceeded(
            total,
            PATH_ENUMERATION_BUDGET,
        ));
    }
    let mut remaining = k.values.clone();
    let mut last_to: Vec<Option<usize>> = vec![None; g.vertex_count()];
    let mut out = BTreeMap::new();
    dfs(g, i0, i1, total, &mut remaining, &mut last_to, &mut out);
    Ok(out)
}

fn dfs(
    g: &WeightedGraph,
    at: usize,
    i1: usize,
    left: u64,
    remaining: &mut [u64],
    last_to: &mut [Option<usize>],
    out: &mut BTreeMap<LastExitKey, u64>,
) {
    if left == 0 {
        if at == i1 {
            let key: LastExitKey = last_to
                .iter()
                .enumerate()
                .filter(|&(v, to)| v != i1 && to.is_some())
                .map(|(v, to)| (v, to.unwrap()))
                .collect();
            *out.entry(key).or_insert(0) += 1;
        }
        return;
    }
    for nb in g.neighbors(at) {
        if remaining[nb.dir_out] == 0 {
            continue;
        }
        remaining[nb.dir_out] -= 1;
        let saved = last_to[at];
        last_to[at] = Some(nb.vertex);
        dfs(g, nb.vertex, i1, left - 1, remaining, last_to, out);
        last_to[at] = saved;
        remaining[nb.dir_out] += 1;
    }
}

/// Axis-aligned event box on the non-root local-time coordinates of the two
/// windows, plus optional exact constraints on the discrete components.
/// `None` fields match anything.
#[derive(Debug, Clone)]
pub struct EventSpec {
    pub k: Option<Vec<u64>>,
    pub k_prime: Option<Vec<u64>>,
    /// Closed intervals for `l_i`, `i != i0`, in ascending vertex order.
    pub l_box: Option<Vec<(f64, f64)>>,
    pub l_prime_box: Option<Vec<(f64, f64)>>,
    pub end1: Option<usize>,
    pub end2: Option<usize>,
    pub tree1: Option<LastExit>,
    pub tree2: Option<LastExit>,
}

impl EventSpec {
    pub fn anything() -> Self {
        EventSpec {
            k: None,
            k_prime: None,
            l_box: None,
            l_prime_box: None,
            end1: None,
            end2: None,
            tree1: None,
            tree2: None,
        }
    }

    pub fn matches(&self, g: &WeightedGraph, i0: usize, rec: &ObservableRecord) -> bool {
        if let Some(k) = &self.k {
            if &rec.k.values != k {
                return false;
            }
        }
        if let Some(kp) = &self.k_prime {
            if &rec.k_prime.values != kp {
                return false;
            }
        }
        if let Some(e) = self.end1 {
            if rec.end1 != e {
                return false;
            }
        }
        if let Some(e) = self.end2 {
            if rec.end2 != e {
                return false;
            }
        }
        if let Some(t) = &self.tree1 {
            if &rec.tree1 != t {
                return false;
            }
        }
        if let Some(t) = &self.tree2 {
            if &rec.tree2 != t {
                return false;
            }
        }
        if let Some(bx) = &self.l_box {
            if !in_box(g, i0, &rec.l, bx) {
                return false;
            }
        }
        if let Some(bx) = &self.l_prime_box {
            if !in_box(g, i0, &rec.l_prime, bx) {
                return false;
            }
        }
        true
    }
}

fn in_box(g: &WeightedGraph, i0: usize, l: &[f64], bx: &[(f64, f64)]) -> bool {
    let mut idx = 0;
    for v in 0..g.vertex_count() {
        if v == i0 {
            continue;
        }
        let (lo, hi) = bx[idx];
        if l[v] < lo || l[v] > hi {
            return false;
        }
        idx += 1;
    }
    true
}

/// Monte Carlo estimate of an event probability over `n` independent
/// two-window trajectories, with its binomial standard error. Trajectories
/// run in parallel on per-index random streams, so the count is independent
/// of scheduling.
pub fn mc_event_probability(
    g: &WeightedGraph,
    i0: usize,
    event: &EventSpec,
    sigma: f64,
    sigma_prime: f64,
    n: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(n >= 10_000, "estimate needs at least 1e4 trajectories");
    let hits: u64 = (0..n as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = trajectory_rng(seed, idx);
            let rec = simulate_two_scales(g, i0, sigma, sigma_prime, &mut rng);
            u64::from(event.matches(g, i0, &rec))
        })
        .sum();
    let p = hits as f64 / n as f64;
    let stderr = (p * (1.0 - p) / n as f64).sqrt();
    (p, stderr)
}

/// Closed-form Jacobian determinant of the local-time-to-field map, used as
/// the reference for the finite-difference check.
///
/// The leading monomial form
/// `(4 sqrt(l0) l0')^{1-|V|} (sigma sigma'/(l0 l0')) prod l0 l0'/(l_i l_i')`
/// is exact only when the two windows' log-local-time fields coincide
/// (`l'` proportional to `l`): because the fluctuation scale `sqrt(l0)`
/// itself depends on the first-window local times, the full determinant
/// carries the rank-one tilt factor
/// `1 + sum_{i != i0} z_i (u_i - v_i) / sum_j z_j` with `z_i = l_i/l0`.
/// The tilt is `1 + O(sigma^{-1/2})` on bounded rescaled sets, which is why
/// the monomial form is the right reference measure asymptotically.
pub fn jacobian_closed_form(
    g: &WeightedGraph,
    l: &[f64],
    l_prime: &[f64],
    sigma: f64,
    sigma_prime: f64,
    i0: usize,
) -> f64 {
    jacobian_monomial_form(g, l, l_prime, sigma, sigma_prime, i0)
        * jacobian_tilt(g, l, l_prime, i0)
}

/// The monomial part of the closed form; exact on the diagonal `l' ∝ l`.
pub fn jacobian_monomial_form(
    g: &WeightedGraph,
    l: &[f64],
    l_prime: &[f64],
    sigma: f64,
    sigma_prime: f64,
    i0: usize,
) -> f64 {
    let n = g.vertex_count() as f64;
    let l0 = l[i0];
    let l0p = l_prime[i0];
    let mut value = (4.0 * l0.sqrt() * l0p).powf(1.0 - n) * sigma * sigma_prime / (l0 * l0p);
    for i in 0..g.vertex_count() {
        if i != i0 {
            value *= l0 * l0p / (l[i] * l_prime[i]);
        }
    }
    value
}

/// The rank-one tilt from differentiating the fluctuation scale.
pub fn jacobian_tilt(g: &WeightedGraph, l: &[f64], l_prime: &[f64], i0: usize) -> f64 {
    let l0 = l[i0];
    let l0p = l_prime[i0];
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..g.vertex_count() {
        let z = l[i] / l0;
        den += z;
        if i != i0 {
            let v = 0.5 * (l[i] / l0).ln();
            let u = 0.5 * (l_prime[i] / l0p).ln();
            num += z * (u - v);
        }
    }
    1.0 + num / den
}

/// Central finite-difference check of the Jacobian of
/// `(l, l') -> (s, u)` on the two-simplex coordinates against the closed
/// form. Returns the relative discrepancy.
pub fn jacobian_check(
    g: &WeightedGraph,
    l: &[f64],
    l_prime: &[f64],
    sigma: f64,
    sigma_prime: f64,
    i0: usize,
    step: f64,
) -> Result<f64, OracleError> {
    let n = g.vertex_count();
    if l.iter().any(|&x| x < 1e-8 * sigma) || l_prime.iter().any(|&x| x < 1e-8 * sigma_prime) {
        return Err(OracleError::SingularPoint);
    }
    let sum: f64 = l.iter().sum();
    let sum_p: f64 = l_prime.iter().sum();
    if (sum - sigma).abs() > 1e-6 * sigma || (sum_p - sigma_prime).abs() > 1e-6 * sigma_prime {
        return Err(OracleError::InvalidLocalTimes);
    }
    let free: Vec<usize> = (0..n).filter(|&v| v != i0).collect();
    let dim = 2 * (n - 1);
    // Coordinates: non-root l entries then non-root l' entries. Outputs:
    // non-root s entries then non-root u entries.
    let phi = |x: &[f64]| -> Vec<f64> {
        let mut lv = vec![0.0; n];
        let mut lpv = vec![0.0; n];
        for (j, &v) in free.iter().enumerate() {
            lv[v] = x[j];
            lpv[v] = x[n - 1 + j];
        }
        lv[i0] = sigma - lv.iter().sum::<f64>();
        lpv[i0] = sigma_prime - lpv.iter().sum::<f64>();
        let mut out = Vec::with_capacity(dim);
        let sqrt_l0 = lv[i0].sqrt();
        for &v in &free {
            let vv = 0.5 * (lv[v] / lv[i0]).ln();
            let uu = 0.5 * (lpv[v] / lpv[i0]).ln();
            out.push(sqrt_l0 * (uu - vv));
        }
        for &v in &free {
            out.push(0.5 * (lpv[v] / lpv[i0]).ln());
        }
        out
    };
    let mut x0 = Vec::with_capacity(dim);
    for &v in &free {
        x0.push(l[v]);
    }
    for &v in &free {
        x0.push(l_prime[v]);
    }
    let mut jac = DMatrix::<f64>::zeros(dim, dim);
    for c in 0..dim {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[c] += step;
        xm[c] -= step;
        let fp = phi(&xp);
        let fm = phi(&xm);
        for r in 0..dim {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * step);
        }
    }
    let det = jac.lu().determinant().abs();
    let closed = jacobian_closed_form(g, l, l_prime, sigma, sigma_prime, i0);
    Ok((det - closed).abs() / closed)
}

/// Exact law of the log-scale field component of a complete first window on
/// the two-vertex graph with edge weight `w`, as a CDF grid: the closed-form
/// joint window density summed over all admissible crossing numbers and both
/// endpoints, integrated by Simpson panels. A pure-quadrature oracle with no
/// Monte Carlo content, used to separate finite-window physics from
/// simulator error.
pub fn k2_exact_window_cdf(sigma: f64, w: f64) -> crate::harness::limit::CdfGrid {
    use statrs::function::gamma::ln_gamma;
    // Density of the non-root local time at fixed endpoint, summed over
    // crossing counts; alternating paths make both sums one-dimensional.
    // Everything stays in log space: the exponential prefactor and the
    // crossing sums separately overflow past window lengths of a few
    // hundred, while their product is of order one.
    let log_density_l1 = |l1: f64| -> f64 {
        let l0 = sigma - l1;
        if l0 <= 0.0 || l1 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let base = w * (1.0 - ((1.0 + l0) * (1.0 + l1)).sqrt());
        let la = (0.5 * w * l0).ln();
        let lb = (0.5 * w * l1).ln();
        // Log-sum-exp over the crossing count, shifted by the running max.
        let mut log_terms: Vec<f64> = Vec::with_capacity(64);
        // Ends at the root: m crossings each way, last exit from the other
        // vertex toward the root.
        let mut prev = f64::NEG_INFINITY;
        for m in 1..2_000_000u64 {
            let mf = m as f64;
            let t = mf * la - ln_gamma(mf + 1.0) + mf * lb - ln_gamma(mf + 1.0)
                + (mf / l1).ln()
                - 0.5 * (1.0 + l1).ln();
            log_terms.push(t);
            if mf > 0.5 * w * (l0 * l1).sqrt() && t < prev - 50.0 {
                break;
            }
            prev = prev.max(t);
        }
        // Ends at the other vertex: m+1 outward, m return crossings.
        let mut prev = f64::NEG_INFINITY;
        for m in 0..2_000_000u64 {
            let mf = m as f64;
            let t = (mf + 1.0) * la - ln_gamma(mf + 2.0) + mf * lb - ln_gamma(mf + 1.0)
                + ((mf + 1.0) / l0).ln()
                - 0.5 * (1.0 + l0).ln();
            log_terms.push(t);
            if mf > 0.5 * w * (l0 * l1).sqrt() && t < prev - 50.0 {
                break;
            }
            prev = prev.max(t);
        }
        let peak = log_terms.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if !peak.is_finite() {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = log_terms.iter().map(|t| (t - peak).exp()).sum();
        base + peak + sum.ln()
    };
    let density_l1 = |l1: f64| log_density_l1(l1).exp();
    let grid = 4001usize;
    let vmax = 6.0f64;
    let xs: Vec<f64> = (0..grid)
        .map(|k| -vmax + 2.0 * vmax * k as f64 / (grid - 1) as f64)
        .collect();
    let f = |v: f64| {
        let e = (2.0 * v).exp();
        let l1 = sigma * e / (1.0 + e);
        let l0 = sigma - l1;
        density_l1(l1) * (2.0 * l0 * l1 / sigma)
    };
    let mut masses = Vec::with_capacity(grid - 1);
    for k in 0..grid - 1 {
        let (a, b) = (xs[k], xs[k + 1]);
        let mid = 0.5 * (a + b);
        masses.push((b - a) / 6.0 * (f(a) + 4.0 * f(mid) + f(b)));
    }
    let total: f64 = masses.iter().sum();
    let mut fs = vec![0.0];
    let mut acc = 0.0;
    for m in &masses {
        acc += m / total;
        fs.push(acc);
    }
    crate::harness::limit::CdfGrid { xs, fs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::path_count;
    use crate::graph::fixtures::*;
    use crate::graph::DirectedTree;
    use num_traits::ToPrimitive;

    fn tree_key(g: &WeightedGraph, t: &DirectedTree) -> LastExitKey {
        (0..g.vertex_count())
            .filter(|&v| v != t.root)
            .map(|v| (v, t.parent[v].unwrap()))
            .collect()
    }

    #[test]
    fn k2_two_by_two_crossings_single_path() {
        let g = k2();
        let k = IntegerCurrent::new(vec![2, 2], 0, 0);
        let paths = enumerate_paths(&g, 0, 0, &k).unwrap();
        // 0 -> 1 -> 0 -> 1 -> 0 is the only ordering.
        assert_eq!(paths.len(), 1);
        let tree = DirectedTree::from_parent_pairs(&g, 0, &[(1, 0)]).unwrap();
        assert_eq!(paths[&tree_key(&g, &tree)], 1);
    }

    #[test]
    fn triangle_unit_cycle_single_path() {
        let g = triangle();
        let mut values = vec![0u64; 6];
        values[g.dir_edge(0, 1).unwrap()] = 1;
        values[g.dir_edge(1, 2).unwrap()] = 1;
        values[g.dir_edge(2, 0).unwrap()] = 1;
        let k = IntegerCurrent::new(values, 0, 0);
        let paths = enumerate_paths(&g, 0, 0, &k).unwrap();
        assert_eq!(paths.values().sum::<u64>(), 1);
    }

    #[test]
    fn eulerian_triangle_counts_match_formula_per_tree() {
        let g = triangle();
        let k = IntegerCurrent::new(vec![1; 6], 0, 0);
        let paths = enumerate_paths(&g, 0, 0, &k).unwrap();
        assert_eq!(paths.values().sum::<u64>(), 6);
        for tree in g.directed_trees_toward(0).unwrap() {
            let formula = path_count(&g, &k, &tree, 0, 0).unwrap().to_u64().unwrap();
            let brute = paths.get(&tree_key(&g, &tree)).copied().unwrap_or(0);
            assert_eq!(formula, brute);
        }
    }

    #[test]
    fn path_count_matches_enumeration_on_the_four_cycle() {
        let g = cycle4();
        let dirs = g.directed_edge_count();
        let mut k = vec![0u64; dirs];
        loop {
            let total: u64 = k.iter().sum();
            if (1..=8).contains(&total) {
                for i1 in 0..g.vertex_count() {
                    let current = IntegerCurrent::new(k.clone(), 0, i1);
                    if !crate::graph::check_kirchhoff_int(&g, &current, Some(0), Some(i1)) {
                        continue;
                    }
                    let brute = enumerate_paths(&g, 0, i1, &current).unwrap();
                    for tree in g.directed_trees_toward(i1).unwrap() {
                        let key = tree_key(&g, &tree);
                        let expect = brute.get(&key).copied().unwrap_or(0);
                        let got = path_count(&g, &current, &tree, 0, i1).unwrap();
                        assert_eq!(got, num_bigint::BigUint::from(expect));
                    }
                }
            }
            let mut pos = 0;
            loop {
                if pos == dirs {
                    break;
                }
                k[pos] += 1;
                if k.iter().sum::<u64>() <= 8 {
                    break;
                }
                k[pos] = 0;
                pos += 1;
            }
            if pos == dirs {
                break;
            }
        }
    }

    #[test]
    fn budget_guard_trips() {
        let g = k2();
        let k = IntegerCurrent::new(vec![20, 20], 0, 0);
        assert!(matches!(
            enumerate_paths(&g, 0, 0, &k),
            Err(OracleError::PathBudgetExceeded(40, _))
        ));
    }

    #[test]
    fn impossible_event_has_zero_probability() {
        let g = k2();
        // k = (1, 0) with matching endpoints at 0 violates parity: going
        // 0 -> 1 once and never back cannot end the first window at 0.
        let event = EventSpec {
            k: Some(vec![1, 0]),
            end1: Some(0),
            ..EventSpec::anything()
        };
        let (p, _) = mc_event_probability(&g, 0, &event, 1.5, 1.5, 10_000, 5);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn total_probability_is_one() {
        let g = triangle();
        let (p, se) = mc_event_probability(&g, 0, &EventSpec::anything(), 2.0, 2.0, 10_000, 6);
        assert_eq!(p, 1.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn jacobian_matches_closed_form_on_k2() {
        let g = k2();
        let err = jacobian_check(&g, &[1.0, 1.0], &[1.5, 1.5], 2.0, 3.0, 0, 1e-5).unwrap();
        assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn jacobian_matches_on_random_triangle_points() {
        let g = triangle();
        let l = [0.9, 0.5, 0.6];
        let lp = [1.1, 2.2, 0.7];
        let err = jacobian_check(&g, &l, &lp, 2.0, 4.0, 0, 1e-5).unwrap();
        assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn jacobian_error_grows_with_step() {
        let g = triangle();
        let l = [0.9, 0.5, 0.6];
        let lp = [1.1, 2.2, 0.7];
        let fine = jacobian_check(&g, &l, &lp, 2.0, 4.0, 0, 1e-4).unwrap();
        let coarse = jacobian_check(&g, &l, &lp, 2.0, 4.0, 0, 1e-2).unwrap();
        assert!(coarse >= fine, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn jacobian_rejects_near_boundary_points() {
        let g = k2();
        assert!(matches!(
            jacobian_check(&g, &[1e-12, 2.0], &[1.0, 1.0], 2.0, 2.0, 0, 1e-5),
            Err(OracleError::SingularPoint)
        ));
    }

    #[test]
    fn lambda_density_consistent_with_jacobian_forms() {
        // The reference measure is the monomial Jacobian form times
        // (l0 l0')^{(|V|-1)/2 - |E|}; the exact determinant adds the tilt.
        let g = triangle();
        let l = [0.9, 0.5, 0.6];
        let lp = [1.1, 2.2, 0.7];
        let (sigma, sigma_prime) = (2.0, 4.0);
        let lam = crate::density::local_time_reference_density(&g, &l, &lp, sigma, sigma_prime, 0)
            .unwrap();
        let monomial = jacobian_monomial_form(&g, &l, &lp, sigma, sigma_prime, 0);
        let n = g.vertex_count() as f64;
        let m = g.edge_count() as f64;
        let factor = (l[0] * lp[0]).powf(0.5 * (n - 1.0) - m);
        approx::assert_relative_eq!(lam.value(), monomial * factor, max_relative = 1e-12);
        let exact = jacobian_closed_form(&g, &l, &lp, sigma, sigma_prime, 0);
        approx::assert_relative_eq!(
            exact,
            monomial * jacobian_tilt(&g, &l, &lp, 0),
            max_relative = 1e-14
        );
        // On the diagonal the tilt is one and the monomial form is exact.
        let lp_diag: Vec<f64> = l.iter().map(|x| x * sigma_prime / sigma).collect();
        approx::assert_relative_eq!(
            jacobian_tilt(&g, &l, &lp_diag, 0),
            1.0,
            epsilon = 1e-14
        );
    }
}
