//! Closed-form evaluation, in natural-log space, of every density and
//! combinatorial factor of the model.
//!
//! Reference measures matter here and each evaluator documents its own:
//! field densities are taken w.r.t. Lebesgue measure on the non-root
//! coordinates (times counting measure on trees and endpoints), current
//! densities w.r.t. the tree-coordinate Lebesgue measure on the space of
//! sourceless currents, and the finite-time joint density w.r.t.
//! `prod_{i != i0} dl_i dl'_i` for fixed integer crossings, endpoints and
//! last-exit trees.
//!
//! Degenerate inputs (zero local times, non-spanning trees, currents with
//! the wrong sources) are rejected rather than mapped to density zero, so
//! accounting bugs upstream surface as errors instead of silent zeros.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::graph::{
    check_kirchhoff_int, DirectedTree, IntegerCurrent, NotInH, SpanningTree, WeightedGraph,
};
use crate::simulate::{rescale, LastExit, ObservableRecord, RescaleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("field `{0}` must vanish at the root vertex")]
    RootNotZero(&'static str),
    #[error("field `{0}` has wrong length")]
    WrongLength(&'static str),
    #[error("`{0}` is not a spanning tree of the graph")]
    NotSpanning(&'static str),
    #[error("tree `{0}` is not directed toward vertex {1}")]
    WrongTreeRoot(&'static str, usize),
    #[error("local time `{0}` must be strictly positive at vertex {1}")]
    NonPositiveLocalTime(&'static str, usize),
    #[error("crossing numbers `{0}` must be strictly positive on every directed edge")]
    CrossingNotPositive(&'static str),
    #[error("current `{0}` violates the Kirchhoff rules for source {1:?}, sink {2:?}")]
    KirchhoffViolated(&'static str, Option<usize>, Option<usize>),
    #[error("local times sum to {got}, expected {expected}")]
    LocalTimeSumMismatch { expected: f64, got: f64 },
    #[error(transparent)]
    NotInH(#[from] NotInH),
    #[error("path-count formula produced a non-integral value; inputs violate a structural invariant")]
    NonIntegralResult,
    #[error("record is outside the positive-local-time spanning-tree event")]
    NotInO,
}

impl From<RescaleError> for DensityError {
    fn from(_: RescaleError) -> Self {
        DensityError::NotInO
    }
}

/// Nonnegative density carried as its natural logarithm; `-inf` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub log_value: f64,
}

impl LogDensity {
    pub fn from_log(log_value: f64) -> Self {
        LogDensity { log_value }
    }

    pub fn value(self) -> f64 {
        self.log_value.exp()
    }
}

/// A point of the field sector: `s`, `u`, `v` on the vertices, all zero at
/// the root, with the derived edge weights `omega = (W/2) e^{v_i+v_j}` and
/// `omega' = (W/2) e^{u_i+u_j}`.
#[derive(Debug, Clone)]
pub struct FieldPoint {
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldPoint {
    pub fn new(
        g: &WeightedGraph,
        s: Vec<f64>,
        v: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self, DensityError> {
        require_field(g, "s", &s)?;
        require_field(g, "v", &v)?;
        require_field(g, "u", &u)?;
        Ok(FieldPoint { s, u, v })
    }

    pub fn omega(&self, g: &WeightedGraph) -> Vec<f64> {
        edge_weights_from_field(g, &self.v)
    }

    pub fn omega_prime(&self, g: &WeightedGraph) -> Vec<f64> {
        edge_weights_from_field(g, &self.u)
    }
}

/// `(W_e/2) e^{x_i + x_j}` per undirected edge.
pub fn edge_weights_from_field(g: &WeightedGraph, x: &[f64]) -> Vec<f64> {
    g.edges()
        .iter()
        .map(|e| 0.5 * e.weight * (x[e.a] + x[e.b]).exp())
        .collect()
}

fn require_field(g: &WeightedGraph, name: &'static str, x: &[f64]) -> Result<(), DensityError> {
    if x.len() != g.vertex_count() {
        return Err(DensityError::WrongLength(name));
    }
    if x[g.root()] != 0.0 {
        return Err(DensityError::RootNotZero(name));
    }
    Ok(())
}

fn require_spanning(
    g: &WeightedGraph,
    name: &'static str,
    t: &SpanningTree,
) -> Result<(), DensityError> {
    if !is_spanning_tree(g, t) {
        return Err(DensityError::NotSpanning(name));
    }
    Ok(())
}

fn is_spanning_tree(g: &WeightedGraph, t: &SpanningTree) -> bool {
    let n = g.vertex_count();
    if t.edges.len() != n - 1 {
        return false;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for &e in &t.edges {
        if e >= g.edge_count() {
            return false;
        }
        let (a, b) = (g.edges()[e].a, g.edges()[e].b);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

fn require_directed_toward(
    g: &WeightedGraph,
    name: &'static str,
    t: &DirectedTree,
    i1: usize,
) -> Result<(), DensityError> {
    if !t.is_spanning_toward(g, i1) {
        return Err(DensityError::WrongTreeRoot(name, i1));
    }
    Ok(())
}

fn require_positive(
    g: &WeightedGraph,
    name: &'static str,
    x: &[f64],
) -> Result<(), DensityError> {
    if x.len() != g.vertex_count() {
        return Err(DensityError::WrongLength(name));
    }
    for (i, &v) in x.iter().enumerate() {
        if !(v > 0.0) {
            return Err(DensityError::NonPositiveLocalTime(name, i));
        }
    }
    Ok(())
}

/// `sum_E W_ij (1 - cosh(u_i - u_j) - 1/2 e^{u_i+u_j}(s_i - s_j)^2)`, the
/// field-sector exponent shared by the sigma-model densities.
fn field_exponent(g: &WeightedGraph, u: &[f64], s: &[f64]) -> f64 {
    g.edges()
        .iter()
        .map(|e| {
            let du = u[e.a] - u[e.b];
            let ds = s[e.a] - s[e.b];
            e.weight * (1.0 - du.cosh() - 0.5 * (u[e.a] + u[e.b]).exp() * ds * ds)
        })
        .sum()
}

fn log_sum_exp2(x: &[f64]) -> f64 {
    // ln sum_i e^{2 x_i}; inputs are bounded in practice, direct is fine.
    x.iter().map(|&v| (2.0 * v).exp()).sum::<f64>().ln()
}

/// Tree version of the sigma-model measure: density of `(s, u, T')` w.r.t.
/// `prod_{i != i0} ds_i du_i` times counting measure on spanning trees.
pub fn h22_tree_density(
    g: &WeightedGraph,
    s: &[f64],
    u: &[f64],
    t_prime: &SpanningTree,
) -> Result<LogDensity, DensityError> {
    require_field(g, "s", s)?;
    require_field(g, "u", u)?;
    require_spanning(g, "t_prime", t_prime)?;
    let n = g.vertex_count();
    let mut log = field_exponent(g, u, s);
    for &e in &t_prime.edges {
        let edge = &g.edges()[e];
        log += edge.weight.ln() + u[edge.a] + u[edge.b];
    }
    for i in 0..n {
        if i != g.root() {
            log -= u[i];
        }
    }
    log -= (n as f64 - 1.0) * (2.0 * std::f64::consts::PI).ln();
    Ok(LogDensity::from_log(log))
}

/// Extended-model density of the full nine-component state w.r.t.
/// `dkappa_H dkappa'_H` times the diagonal `1_{u=v} ds du` measure times
/// counting measures on endpoints and trees. The currents may be arbitrary
/// real vectors on directed edges.
#[allow(clippy::too_many_arguments)]
pub fn h22_extended_density(
    g: &WeightedGraph,
    kappa: &[f64],
    kappa_prime: &[f64],
    s: &[f64],
    v: &[f64],
    u: &[f64],
    i1: usize,
    i1_prime: usize,
    t: &SpanningTree,
    t_prime: &SpanningTree,
) -> Result<LogDensity, DensityError> {
    require_field(g, "s", s)?;
    require_field(g, "v", v)?;
    require_field(g, "u", u)?;
    require_spanning(g, "t", t)?;
    require_spanning(g, "t_prime", t_prime)?;
    if kappa.len() != g.directed_edge_count() || kappa_prime.len() != g.directed_edge_count() {
        return Err(DensityError::WrongLength("kappa"));
    }
    let n = g.vertex_count() as f64;
    let m = g.edge_count() as f64;
    let omega_prime = edge_weights_from_field(g, u);
    let mut log = (n - 1.0) * 4.0f64.ln() - 2.0 * m * (2.0 * std::f64::consts::PI).ln();
    log += field_exponent(g, u, s);
    for &e in t.edges.iter().chain(t_prime.edges.iter()) {
        log += omega_prime[e].ln();
    }
    for w in &omega_prime {
        log -= 2.0 * w.ln();
    }
    for d in 0..g.directed_edge_count() {
        let w = omega_prime[d / 2];
        log -= (kappa[d] * kappa[d] + kappa_prime[d] * kappa_prime[d]) / (2.0 * w);
    }
    log += 2.0 * v[i1] + 2.0 * u[i1_prime] - log_sum_exp2(v) - log_sum_exp2(u);
    for i in 0..g.vertex_count() {
        if i != g.root() {
            log -= u[i];
        }
    }
    Ok(LogDensity::from_log(log))
}

/// Marginal of `(s, u, i1, i1', T, T')` under the extended model, with the
/// currents integrated out in closed form; w.r.t.
/// `prod_{i != i0} ds_i du_i` times counting measures. The weighted
/// spanning-tree sum in the denominator comes from the tree polynomial.
#[allow(clippy::too_many_arguments)]
pub fn full_field_marginal_density(
    g: &WeightedGraph,
    s: &[f64],
    u: &[f64],
    i1: usize,
    i1_prime: usize,
    t: &SpanningTree,
    t_prime: &SpanningTree,
) -> Result<LogDensity, DensityError> {
    require_field(g, "s", s)?;
    require_field(g, "u", u)?;
    require_spanning(g, "t", t)?;
    require_spanning(g, "t_prime", t_prime)?;
    let n = g.vertex_count() as f64;
    let omega_prime = edge_weights_from_field(g, u);
    let mut log = -(n - 1.0) * std::f64::consts::PI.ln();
    log += field_exponent(g, u, s);
    for &e in t.edges.iter().chain(t_prime.edges.iter()) {
        log += omega_prime[e].ln();
    }
    log -= g.tree_polynomial(&omega_prime).ln();
    log += 2.0 * u[i1] + 2.0 * u[i1_prime] - 2.0 * log_sum_exp2(u);
    for i in 0..g.vertex_count() {
        if i != g.root() {
            log -= u[i];
        }
    }
    Ok(LogDensity::from_log(log))
}

/// Single-time-scale marginal of `(kappa, v, i1, T)` w.r.t.
/// `dkappa_H prod_{i != i0} dv_i` times counting measures. The current must
/// be sourceless.
pub fn single_scale_marginal_density(
    g: &WeightedGraph,
    kappa: &crate::graph::CurrentVector,
    v: &[f64],
    i1: usize,
    t: &SpanningTree,
) -> Result<LogDensity, DensityError> {
    require_field(g, "v", v)?;
    require_spanning(g, "t", t)?;
    let t0 = g.reference_tree();
    crate::graph::iota(g, &t0, kappa)?;
    let omega = edge_weights_from_field(g, v);
    let m = g.edge_count() as f64;
    let mut log = -m * std::f64::consts::PI.ln();
    for e in g.edges() {
        log += e.weight * (1.0 - (v[e.a] - v[e.b]).cosh());
    }
    for e in 0..g.edge_count() {
        if !t.edges.contains(&e) {
            log -= (2.0 * omega[e]).ln();
        }
    }
    for d in 0..g.directed_edge_count() {
        log -= kappa.values[d] * kappa.values[d] / (2.0 * omega[d / 2]);
    }
    log += 2.0 * v[i1] - log_sum_exp2(v);
    for i in 0..g.vertex_count() {
        if i != g.root() {
            log -= v[i];
        }
    }
    Ok(LogDensity::from_log(log))
}

/// `k ln(rate) - ln k!`, fused so the two huge terms cancel analytically.
///
/// For large `k` the naive difference loses up to `|ln Gamma| * 1e-13`
/// absolutely, which at window lengths ~1e9 pollutes density logs at the
/// 1e-3 level. The Stirling form keeps the ill-conditioned piece as
/// `k ln(rate/k)`, whose argument sits near one in the regimes that matter.
fn ln_pow_over_factorial(k: u64, rate: f64) -> f64 {
    let kf = k as f64;
    if k < 10_000 {
        return kf * rate.ln() - ln_gamma(kf + 1.0);
    }
    // ln k! = k ln k - k + ln(2 pi k)/2 + 1/(12k) - 1/(360k^3) + ...
    let correction = 1.0 / (12.0 * kf) - 1.0 / (360.0 * kf * kf * kf);
    kf * (rate / kf).ln() + kf - 0.5 * (2.0 * std::f64::consts::PI * kf).ln() - correction
}

/// Per-window crossing/local-time weight: over every directed edge the
/// factor `((W_ij l_i / 2)^{k_ij}) / k_ij!`, and over the directed tree the
/// factor `k_ij / l_i`. Inputs must have strictly positive crossings and
/// local times; violations are caller bugs.
pub fn crossing_weight(
    g: &WeightedGraph,
    k: &IntegerCurrent,
    l: &[f64],
    tree: &DirectedTree,
) -> LogDensity {
    assert_eq!(k.values.len(), g.directed_edge_count());
    assert_eq!(l.len(), g.vertex_count());
    assert!(
        k.values.iter().all(|&v| v >= 1),
        "crossing numbers must be strictly positive"
    );
    assert!(l.iter().all(|&v| v > 0.0), "local times must be positive");
    let mut log = 0.0;
    for d in 0..g.directed_edge_count() {
        let tail = g.dir_tail(d);
        let w = g.weight(d / 2);
        log += ln_pow_over_factorial(k.values[d], 0.5 * w * l[tail]);
    }
    for d in tree.dir_edges(g) {
        let tail = g.dir_tail(d);
        log += (k.values[d] as f64).ln() - l[tail].ln();
    }
    LogDensity::from_log(log)
}

/// Joint finite-time density of the two-window observable at fixed crossing
/// numbers, endpoints and directed last-exit trees, w.r.t.
/// `prod_{i != i0} dl_i dl'_i`.
#[allow(clippy::too_many_arguments)]
pub fn finite_time_density(
    g: &WeightedGraph,
    k: &IntegerCurrent,
    k_prime: &IntegerCurrent,
    l: &[f64],
    l_prime: &[f64],
    i1: usize,
    i1_prime: usize,
    tree: &DirectedTree,
    tree_prime: &DirectedTree,
) -> Result<LogDensity, DensityError> {
    let i0 = g.root();
    require_positive(g, "l", l)?;
    require_positive(g, "l_prime", l_prime)?;
    require_directed_toward(g, "tree", tree, i1)?;
    require_directed_toward(g, "tree_prime", tree_prime, i1_prime)?;
    if k.values.iter().any(|&v| v < 1) {
        return Err(DensityError::CrossingNotPositive("k"));
    }
    if k_prime.values.iter().any(|&v| v < 1) {
        return Err(DensityError::CrossingNotPositive("k_prime"));
    }
    if !check_kirchhoff_int(g, k, Some(i0), Some(i1)) {
        return Err(DensityError::KirchhoffViolated("k", Some(i0), Some(i1)));
    }
    if !check_kirchhoff_int(g, k_prime, Some(i1), Some(i1_prime)) {
        return Err(DensityError::KirchhoffViolated(
            "k_prime",
            Some(i1),
            Some(i1_prime),
        ));
    }
    let mut log = 0.0;
    for e in g.edges() {
        let ti = 1.0 + l[e.a] + l_prime[e.a];
        let tj = 1.0 + l[e.b] + l_prime[e.b];
        log += e.weight * (1.0 - (ti * tj).sqrt());
    }
    for i in 0..g.vertex_count() {
        if i != i1_prime {
            log -= 0.5 * (1.0 + l[i] + l_prime[i]).ln();
        }
    }
    log += crossing_weight(g, k, l, tree).log_value;
    log += crossing_weight(g, k_prime, l_prime, tree_prime).log_value;
    Ok(LogDensity::from_log(log))
}

fn factorial(n: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 2..=n {
        acc *= i;
    }
    acc
}

/// Exact number of discrete paths from `i0` to `i1` that cross every
/// directed edge the prescribed number of times and leave every vertex for
/// the last time along the given directed tree. Zero when a vertex other
/// than `i1` is never departed or a tree edge is never crossed.
pub fn path_count(
    g: &WeightedGraph,
    k: &IntegerCurrent,
    tree: &DirectedTree,
    i0: usize,
    i1: usize,
) -> Result<BigUint, DensityError> {
    require_directed_toward(g, "tree", tree, i1)?;
    if !check_kirchhoff_int(g, k, Some(i0), Some(i1)) {
        return Err(DensityError::KirchhoffViolated("k", Some(i0), Some(i1)));
    }
    let departures = k.departures(g);
    for (i, &d) in departures.iter().enumerate() {
        if i != i1 && d == 0 {
            return Ok(BigUint::zero());
        }
    }
    let tree_dirs = tree.dir_edges(g);
    if tree_dirs.iter().any(|&d| k.values[d] == 0) {
        return Ok(BigUint::zero());
    }
    let mut numerator = factorial(departures[i1]);
    for (i, &d) in departures.iter().enumerate() {
        if i != i1 {
            numerator *= factorial(d - 1);
        }
    }
    for &d in &tree_dirs {
        numerator *= k.values[d];
    }
    let mut denominator = BigUint::one();
    for &kd in &k.values {
        denominator *= factorial(kd);
    }
    if (&numerator % &denominator) != BigUint::zero() {
        return Err(DensityError::NonIntegralResult);
    }
    Ok(numerator / denominator)
}

/// Volume factor of the jump-time simplices at one window:
/// `l_{i1}^{k_{i1}}/k_{i1}! * prod_{i != i1} l_i^{k_i - 1}/(k_i - 1)!`
/// where `k_i` counts departures from vertex `i`.
pub fn volume_factor(
    g: &WeightedGraph,
    k: &IntegerCurrent,
    l: &[f64],
    i1: usize,
) -> LogDensity {
    assert!(k.values.iter().all(|&v| v >= 1));
    assert!(l.iter().all(|&v| v > 0.0));
    let departures = k.departures(g);
    let mut log = departures[i1] as f64 * l[i1].ln() - ln_gamma(departures[i1] as f64 + 1.0);
    for i in 0..g.vertex_count() {
        if i != i1 {
            let d = departures[i] as f64;
            log += (d - 1.0) * l[i].ln() - ln_gamma(d);
        }
    }
    LogDensity::from_log(log)
}

/// Closed form of the Gaussian integral over sourceless currents with edge
/// variances `omega'`:
/// `2^{|E|-|V|+1} pi^{|E|-(|V|-1)/2} prod omega' / sqrt(tree polynomial)`.
/// With `squared` the integral runs over two independent currents and the
/// value is squared.
pub fn gaussian_current_integral(
    g: &WeightedGraph,
    omega_prime: &[f64],
    squared: bool,
) -> f64 {
    assert_eq!(omega_prime.len(), g.edge_count());
    assert!(omega_prime.iter().all(|&w| w > 0.0));
    let n = g.vertex_count() as f64;
    let m = g.edge_count() as f64;
    let tp = g.tree_polynomial(omega_prime);
    let log = (m - n + 1.0) * 2.0f64.ln()
        + (m - 0.5 * (n - 1.0)) * std::f64::consts::PI.ln()
        + omega_prime.iter().map(|w| w.ln()).sum::<f64>()
        - 0.5 * tp.ln();
    if squared {
        (2.0 * log).exp()
    } else {
        log.exp()
    }
}

/// Density of the local-time reference measure on the two-window simplex
/// pair, w.r.t. `prod_{i != i0} dl_i dl'_i`.
pub fn local_time_reference_density(
    g: &WeightedGraph,
    l: &[f64],
    l_prime: &[f64],
    sigma: f64,
    sigma_prime: f64,
    i0: usize,
) -> Result<LogDensity, DensityError> {
    require_positive(g, "l", l)?;
    require_positive(g, "l_prime", l_prime)?;
    let sum: f64 = l.iter().sum();
    if (sum - sigma).abs() > 1e-6 * sigma {
        return Err(DensityError::LocalTimeSumMismatch {
            expected: sigma,
            got: sum,
        });
    }
    let sum_p: f64 = l_prime.iter().sum();
    if (sum_p - sigma_prime).abs() > 1e-6 * sigma_prime {
        return Err(DensityError::LocalTimeSumMismatch {
            expected: sigma_prime,
            got: sum_p,
        });
    }
    let n = g.vertex_count() as f64;
    let m = g.edge_count() as f64;
    let l0 = l[i0];
    let l0p = l_prime[i0];
    let mut log = (1.0 - n) * 4.0f64.ln();
    log -= m * l0.ln();
    log -= (m + 0.5 * (n - 1.0)) * l0p.ln();
    log += sigma.ln() + sigma_prime.ln() - l0.ln() - l0p.ln();
    for i in 0..g.vertex_count() {
        if i != i0 {
            log += l0.ln() + l0p.ln() - l[i].ln() - l_prime[i].ln();
        }
    }
    Ok(LogDensity::from_log(log))
}

/// Ratio of the exact finite-time density of a simulated record to the
/// product of the limiting extended-model density at the rescaled point and
/// the local-time reference density. Tends to one as both windows grow with
/// the second dominating the square of the first.
pub fn limit_density_ratio(
    g: &WeightedGraph,
    record: &ObservableRecord,
    i0: usize,
) -> Result<f64, DensityError> {
    if !record.in_o {
        return Err(DensityError::NotInO);
    }
    let (tree, tree_prime) = match (&record.tree1, &record.tree2) {
        (LastExit::Tree(a), LastExit::Tree(b)) => (a, b),
        _ => return Err(DensityError::NotInO),
    };
    let resc = rescale(g, record, i0)?;
    let ft = finite_time_density(
        g,
        &record.k,
        &record.k_prime,
        &record.l,
        &record.l_prime,
        record.end1,
        record.end2,
        tree,
        tree_prime,
    )?;
    let rb = h22_extended_density(
        g,
        &resc.kappa.values,
        &resc.kappa_prime.values,
        &resc.s,
        &resc.v,
        &resc.u,
        record.end1,
        record.end2,
        &tree.shadow(g),
        &tree_prime.shadow(g),
    )?;
    let lam = local_time_reference_density(
        g,
        &record.l,
        &record.l_prime,
        record.sigma,
        record.sigma_prime,
        i0,
    )?;
    Ok((ft.log_value - rb.log_value - lam.log_value).exp())
}
