//! The release-gate verification suite.
//!
//! One function per gate: normalization, marginalization, the Gaussian
//! current integral, path counting, the finite-time density against Monte
//! Carlo, the Jacobian, the limiting density ratio, the weak-convergence
//! battery, and structural invariants of the simulator. Each returns
//! [`TestReport`] values with every tolerance pinned in code; the CLI
//! `verify` subcommand and the acceptance test target both run these.

use rayon::prelude::*;

use crate::density::{
    full_field_marginal_density, gaussian_current_integral, h22_tree_density, path_count,
};
use crate::graph::fixtures;
use crate::graph::{check_kirchhoff_int, IntegerCurrent, WeightedGraph};
use crate::harness::limit::{LimitLaw, FIELD_BOX};
use crate::harness::{
    compare_fluctuations, compare_single_time, default_scan_point, density_ratio_scan,
    run_calibration, run_ensemble, run_single_scale_ensemble, SingleScaleSample, TestReport,
};
use crate::oracle::quadrature::{adaptive_1d, hcubature, QuadratureSpec};
use crate::oracle::{enumerate_paths, jacobian_check, mc_event_probability, EventSpec};
use crate::simulate::{simulate_two_scales, trajectory_rng, LastExit};

/// Wider box for the fluctuation coordinates: at strongly negative field
/// values the conditional fluctuation Gaussian has deviation `e^{-u/2}`, so
/// the field box alone would clip mass at the 1e-6 level.
pub const S_BOX: f64 = 30.0;

fn report(name: &str, statistic: f64, threshold: f64, passed: bool, details: String) -> TestReport {
    TestReport {
        name: name.into(),
        statistic,
        p_value: None,
        passed,
        threshold,
        sample_size: 0,
        seed: 0,
        details,
    }
}

/// Normalization of the tree-model measure by direct quadrature over fields
/// and trees: within 1e-6 of one on the two-vertex graph and 1e-3 on the
/// triangle.
pub fn normalization_reports() -> Vec<TestReport> {
    let mut out = Vec::new();
    for (g, tol, label) in [
        (fixtures::k2(), 1e-6, "k2"),
        (fixtures::triangle(), 1e-3, "triangle"),
    ] {
        let n = g.vertex_count();
        let dim = 2 * (n - 1);
        let trees = g.spanning_trees().unwrap().to_vec();
        let mut bounds = vec![(-FIELD_BOX - 4.0, FIELD_BOX + 4.0); n - 1];
        bounds.extend(vec![(-S_BOX, S_BOX); n - 1]);
        let integrand = |x: &[f64]| {
            let mut u = vec![0.0; n];
            let mut s = vec![0.0; n];
            let mut idx = 0;
            for i in 0..n {
                if i != g.root() {
                    u[i] = x[idx];
                    s[i] = x[n - 1 + idx];
                    idx += 1;
                }
            }
            trees
                .iter()
                .map(|t| h22_tree_density(&g, &s, &u, t).unwrap().value())
                .sum::<f64>()
        };
        let spec = QuadratureSpec {
            bounds,
            tolerance: tol * 0.2,
            max_evaluations: 400_000_000,
        };
        let (value, est) = if dim == 2 {
            hcubature(integrand, &spec).expect("normalization quadrature converges")
        } else {
            hcubature(integrand, &spec).expect("normalization quadrature converges")
        };
        let err = (value - 1.0).abs();
        out.push(report(
            &format!("normalization_{label}"),
            value,
            tol,
            err <= tol,
            format!("mass {value:.9} (quadrature error estimate {est:.2e})"),
        ));
    }
    out
}

/// Marginalization: summing the full field marginal over endpoints and the
/// first tree recovers the tree-model density at 100 seeded random field
/// points per fixture, to relative 1e-12.
pub fn marginalization_report() -> TestReport {
    use rand::Rng;
    let tol = 1e-12;
    let mut worst = 0.0f64;
    let mut points = 0usize;
    for g in [
        fixtures::k2(),
        fixtures::path3(),
        fixtures::triangle(),
        fixtures::cycle4_chord(),
    ] {
        let n = g.vertex_count();
        let trees = g.spanning_trees().unwrap().to_vec();
        let mut rng = trajectory_rng(2024, 0);
        for _ in 0..100 {
            let mut s = vec![0.0; n];
            let mut u = vec![0.0; n];
            for i in 0..n {
                if i != g.root() {
                    s[i] = 2.0 * rng.random::<f64>() - 1.0;
                    u[i] = 2.0 * rng.random::<f64>() - 1.0;
                }
            }
            let t_prime = &trees[rng.random_range(0..trees.len())];
            let target = h22_tree_density(&g, &s, &u, t_prime).unwrap().value();
            let mut sum = 0.0;
            for i1 in 0..n {
                for i1p in 0..n {
                    for t in &trees {
                        sum += full_field_marginal_density(&g, &s, &u, i1, i1p, t, t_prime)
                            .unwrap()
                            .value();
                    }
                }
            }
            worst = worst.max((sum - target).abs() / target);
            points += 1;
        }
    }
    report(
        "marginalization",
        worst,
        tol,
        worst <= tol,
        format!("worst relative error over {points} field points"),
    )
}

/// Gaussian current integral: closed form against cycle-space quadrature on
/// cycle ranks zero, one, and two, to relative 1e-6.
pub fn gaussian_current_reports() -> Vec<TestReport> {
    let tol = 1e-6;
    let mut out = Vec::new();
    for (g, label) in [
        (fixtures::k2(), "k2"),
        (fixtures::triangle(), "triangle"),
        (fixtures::cycle4_chord(), "cycle4_chord"),
    ] {
        let m = g.edge_count();
        let omega: Vec<f64> = (0..m).map(|e| 0.4 + 0.25 * e as f64).collect();
        let closed = gaussian_current_integral(&g, &omega, false);
        // Oracle: split the current into its symmetric part (independent
        // Gaussians, analytic) and antisymmetric part (cycle-space Gaussian,
        // integrated numerically), with the exact change of measure.
        let n = g.vertex_count() as f64;
        let t0 = g.reference_tree();
        let b = g.cycle_matrix(&t0, &omega);
        let rank = b.nrows();
        let mut oracle = 2.0f64.powf(-(n - 1.0) / 2.0);
        for &w in &omega {
            oracle *= (2.0 * std::f64::consts::PI * w).sqrt();
        }
        let quad_err;
        if rank > 0 {
            let b_inv = b.clone().try_inverse().unwrap();
            let bounds: Vec<(f64, f64)> = (0..rank)
                .map(|c| {
                    let sd = b_inv[(c, c)].sqrt();
                    (-10.0 * sd, 10.0 * sd)
                })
                .collect();
            let f = |x: &[f64]| {
                let mut q = 0.0;
                for i in 0..rank {
                    for j in 0..rank {
                        q += x[i] * b[(i, j)] * x[j];
                    }
                }
                (-0.5 * q).exp()
            };
            let (val, est) = if rank == 1 {
                adaptive_1d(|x| f(&[x]), bounds[0].0, bounds[0].1, 1e-10, 50_000_000).unwrap()
            } else {
                let spec = QuadratureSpec {
                    bounds,
                    tolerance: 1e-9,
                    max_evaluations: 100_000_000,
                };
                hcubature(f, &spec).unwrap()
            };
            oracle *= val;
            quad_err = est;
        } else {
            quad_err = 0.0;
        }
        let rel = (closed - oracle).abs() / closed;
        let squared = gaussian_current_integral(&g, &omega, true);
        let square_ok = (squared - closed * closed).abs() <= 1e-12 * squared;
        out.push(report(
            &format!("gaussian_current_{label}"),
            rel,
            tol,
            rel <= tol && square_ok,
            format!(
                "cycle rank {rank}: closed {closed:.10e} vs oracle {oracle:.10e} (quad err {quad_err:.1e})"
            ),
        ));
    }
    out
}

/// Path counting: the combinatorial formula against exhaustive enumeration
/// for every admissible crossing vector with at most 10 total crossings on
/// the two-vertex graph, the three-path, and the triangle. Exact equality.
pub fn path_counting_report() -> TestReport {
    let budget = 10u64;
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for g in [fixtures::k2(), fixtures::path3(), fixtures::triangle()] {
        let i0 = 0usize;
        let dirs = g.directed_edge_count();
        // Every nonnegative vector with total <= budget.
        let mut k = vec![0u64; dirs];
        loop {
            let total: u64 = k.iter().sum();
            if total >= 1 && total <= budget {
                for i1 in 0..g.vertex_count() {
                    let current = IntegerCurrent::new(k.clone(), i0, i1);
                    if !check_kirchhoff_int(&g, &current, Some(i0), Some(i1)) {
                        continue;
                    }
                    let brute = enumerate_paths(&g, i0, i1, &current).unwrap();
                    for tree in g.directed_trees_toward(i1).unwrap() {
                        let key: Vec<(usize, usize)> = (0..g.vertex_count())
                            .filter(|&v| v != i1)
                            .map(|v| (v, tree.parent[v].unwrap()))
                            .collect();
                        let brute_count = brute.get(&key).copied().unwrap_or(0);
                        let formula = path_count(&g, &current, &tree, i0, i1).unwrap();
                        checked += 1;
                        if formula != num_bigint::BigUint::from(brute_count) {
                            mismatches += 1;
                        }
                    }
                }
            }
            // Odometer over crossing vectors, pruned by the running total.
            let mut pos = 0;
            loop {
                if pos == dirs {
                    break;
                }
                k[pos] += 1;
                if k.iter().sum::<u64>() <= budget {
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
    report(
        "path_counting",
        mismatches as f64,
        0.0,
        mismatches == 0 && checked > 0,
        format!("{checked} (crossing vector, tree) pairs checked exactly"),
    )
}

fn k2_tree_toward(g: &WeightedGraph, root: usize) -> LastExit {
    LastExit::Tree(g.orient_toward(&g.spanning_trees().unwrap()[0], root))
}

/// Finite-time density: Monte Carlo frequency of five events over 1e6
/// trajectories within three binomial standard errors of the quadrature of
/// the joint density, on the two-vertex graph at unit weights and windows
/// of length two.
pub fn finite_time_mc_reports(n_trajectories: usize, seed: u64) -> Vec<TestReport> {
    let g = fixtures::k2();
    let (sigma, sigma_prime) = (2.0, 2.0);
    let t_to_0 = k2_tree_toward(&g, 0);
    let t_to_1 = k2_tree_toward(&g, 1);
    // (name, k, k', end1, end2, l1 box, l1' box)
    let events: Vec<(&str, Vec<u64>, Vec<u64>, usize, usize, (f64, f64), (f64, f64))> = vec![
        ("e1_balanced_ones", vec![1, 1], vec![1, 1], 0, 0, (0.2, 0.9), (0.2, 0.9)),
        ("e2_second_window_twos", vec![1, 1], vec![2, 2], 0, 0, (0.3, 1.2), (0.5, 1.5)),
        ("e3_moving_endpoints", vec![2, 1], vec![1, 2], 1, 0, (0.2, 1.0), (0.2, 1.0)),
        ("e4_wide_box", vec![1, 1], vec![1, 1], 0, 0, (0.05, 1.9), (0.05, 1.9)),
        ("e5_heavier_crossings", vec![2, 2], vec![2, 2], 0, 0, (0.4, 1.6), (0.4, 1.6)),
    ];
    let mut out = Vec::new();
    for (name, k, kp, end1, end2, lbox, lpbox) in events {
        let tree1 = if end1 == 0 { t_to_0.clone() } else { t_to_1.clone() };
        let tree2 = if end2 == 0 { t_to_0.clone() } else { t_to_1.clone() };
        let event = EventSpec {
            k: Some(k.clone()),
            k_prime: Some(kp.clone()),
            l_box: Some(vec![lbox]),
            l_prime_box: Some(vec![lpbox]),
            end1: Some(end1),
            end2: Some(end2),
            tree1: Some(tree1.clone()),
            tree2: Some(tree2.clone()),
        };
        let (p_mc, stderr) =
            mc_event_probability(&g, 0, &event, sigma, sigma_prime, n_trajectories, seed);
        // Quadrature of the joint density over the event box.
        let kc = IntegerCurrent::new(k, 0, end1);
        let kpc = IntegerCurrent::new(kp, end1, end2);
        let td1 = tree1.as_tree().unwrap().clone();
        let td2 = tree2.as_tree().unwrap().clone();
        let spec = QuadratureSpec {
            bounds: vec![lbox, lpbox],
            tolerance: 1e-10,
            max_evaluations: 80_000_000,
        };
        let (p_quad, _) = hcubature(
            |x| {
                let l = [sigma - x[0], x[0]];
                let lp = [sigma_prime - x[1], x[1]];
                crate::density::finite_time_density(&g, &kc, &kpc, &l, &lp, end1, end2, &td1, &td2)
                    .unwrap()
                    .value()
            },
            &spec,
        )
        .expect("event quadrature converges");
        // Binomial deviation scale at the density's own probability, so
        // zero-hit outcomes of rare events are handled correctly.
        let se = (p_quad * (1.0 - p_quad) / n_trajectories as f64)
            .sqrt()
            .max(stderr);
        let dev = (p_mc - p_quad).abs();
        let bound = 3.0 * se + 1e-8;
        out.push(TestReport {
            name: format!("finite_time_mc_{name}"),
            statistic: dev / se.max(1e-300),
            p_value: None,
            passed: dev <= bound,
            threshold: 3.0,
            sample_size: n_trajectories,
            seed,
            details: format!("mc {p_mc:.6e} vs quadrature {p_quad:.6e}, stderr {se:.2e}"),
        });
    }
    out
}

/// Jacobian of the local-time-to-field map: finite differences against the
/// closed form at 50 seeded random interior points each on the two-vertex
/// graph and the triangle, to relative 1e-5.
pub fn jacobian_report() -> TestReport {
    use rand::Rng;
    let tol = 1e-5;
    let mut worst = 0.0f64;
    let mut points = 0usize;
    for g in [fixtures::k2(), fixtures::triangle()] {
        let n = g.vertex_count();
        let (sigma, sigma_prime) = (2.0, 4.0);
        let mut rng = trajectory_rng(4242, 1);
        let mut found = 0;
        while found < 50 {
            // Uniform interior points of the two simplices, kept away from
            // the boundary so the finite differences stay well conditioned.
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.2).collect();
            let raw_p: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.2).collect();
            let tot: f64 = raw.iter().sum();
            let tot_p: f64 = raw_p.iter().sum();
            let l: Vec<f64> = raw.iter().map(|x| sigma * x / tot).collect();
            let lp: Vec<f64> = raw_p.iter().map(|x| sigma_prime * x / tot_p).collect();
            if l.iter().any(|&x| x < 0.05) || lp.iter().any(|&x| x < 0.05) {
                continue;
            }
            let err = jacobian_check(&g, &l, &lp, sigma, sigma_prime, 0, 1e-5).unwrap();
            worst = worst.max(err);
            found += 1;
            points += 1;
        }
    }
    report(
        "jacobian",
        worst,
        tol,
        worst <= tol,
        format!("worst relative error over {points} random interior points"),
    )
}

/// Limiting density ratio: deviation from one strictly decreasing over
/// window scales 10, 100, 1000 (second window cubic) with log-log slope at
/// most -0.4.
pub fn density_ratio_report() -> TestReport {
    let g = fixtures::k2();
    let point = default_scan_point(&g, 0);
    density_ratio_scan(&g, 0, &[10.0, 100.0, 1000.0], &point)
}

/// Parameters of the weak-convergence battery; the release gate runs the
/// full configuration, the quick profile shrinks the ensembles.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceProfile {
    pub sigma: f64,
    pub n: usize,
    pub calibration_reps: usize,
    pub alpha: f64,
    pub min_in_o_rate: f64,
    pub seed: u64,
}

impl ConvergenceProfile {
    pub fn full() -> Self {
        ConvergenceProfile {
            sigma: 200.0,
            n: 100_000,
            calibration_reps: 20,
            alpha: 0.01,
            min_in_o_rate: 0.99,
            seed: 42,
        }
    }

    pub fn quick() -> Self {
        ConvergenceProfile {
            sigma: 30.0,
            n: 5_000,
            calibration_reps: 4,
            alpha: 0.01,
            min_in_o_rate: 0.95,
            seed: 42,
        }
    }
}

/// Weak-convergence battery: the in-event rate and the fluctuation KS on a
/// full two-window ensemble of the two-vertex graph, the field KS from the
/// first window, the endpoint/tree chi-square on the triangle (a
/// first-window statistic, whose law does not involve the second window),
/// and null calibration of every test on exact limit-law samples.
pub fn weak_convergence_reports(profile: ConvergenceProfile) -> Vec<TestReport> {
    let mut out = Vec::new();
    let sigma = profile.sigma;
    let sigma_prime = sigma * sigma * sigma;

    // Two-window ensemble on the two-vertex graph.
    let g = fixtures::k2();
    let law = LimitLaw::compute(&g, 0);
    let ens = run_ensemble(&g, 0, sigma, sigma_prime, profile.n, profile.seed);
    out.push(TestReport {
        name: "in_o_rate_k2".into(),
        statistic: ens.in_o_rate,
        p_value: None,
        passed: ens.in_o_rate >= profile.min_in_o_rate,
        threshold: profile.min_in_o_rate,
        sample_size: profile.n,
        seed: profile.seed,
        details: format!("sigma {sigma}, sigma' {sigma_prime}"),
    });
    let single: Vec<SingleScaleSample> = ens
        .samples
        .iter()
        .filter_map(|s| match s {
            crate::harness::SampleOutcome::InO(r) => {
                Some(SingleScaleSample::from_rescaled(&g, r))
            }
            crate::harness::SampleOutcome::NotInO => None,
        })
        .collect();
    // The gate asserts the named checks; companion battery lines are
    // prefixed `diag_` and report without gating.
    for mut r in compare_single_time(&single, &g, &law, profile.alpha, profile.seed) {
        if r.name != "ks_v1" {
            r.name = format!("diag_{}_k2", r.name);
        }
        out.push(r);
    }
    out.extend(compare_fluctuations(&ens, &g, profile.alpha));

    // Diagnostic companion to the field KS: the same samples against the
    // EXACT finite-window law (closed-form sum over crossing numbers, no
    // Monte Carlo). This separates simulator error from the genuine
    // finite-window deviation of the law itself, whose distance from the
    // limit is also reported.
    {
        let exact = crate::oracle::k2_exact_window_cdf(sigma, 1.0);
        let mut v1: Vec<f64> = single.iter().map(|s| s.v[1]).collect();
        let (stat, p) = crate::harness::stats::ks_test(&mut v1, |x| exact.eval(x));
        let mut dist = 0.0f64;
        for &x in &exact.xs {
            dist = dist.max((exact.eval(x) - law.v_cdfs[0].eval(x)).abs());
        }
        out.push(TestReport {
            name: "diag_exact_window_law_v1".into(),
            statistic: stat,
            p_value: Some(p),
            passed: p > profile.alpha,
            threshold: profile.alpha,
            sample_size: v1.len(),
            seed: profile.seed,
            details: format!(
                "simulated field component vs exact finite-window law; that law itself sits \
                 KS-distance {dist:.5} from the limit law (alpha={} critical distance at this \
                 sample size is {:.5})",
                profile.alpha,
                1.628 / (v1.len() as f64).sqrt()
            ),
        });
    }

    // Endpoint/tree chi-square on the triangle from a first-window ensemble
    // (the pair is a first-window statistic; its law has no second window in
    // it). The full single-time battery also runs on the triangle through
    // the `converge` command; this gate asserts the chi-square it names.
    let tri = fixtures::triangle();
    let tri_law = LimitLaw::compute(&tri, 0);
    let records = run_single_scale_ensemble(&tri, 0, sigma, profile.n, profile.seed + 1);
    let tri_samples: Vec<SingleScaleSample> = records
        .iter()
        .filter_map(|r| SingleScaleSample::from_record(&tri, 0, r))
        .collect();
    let tri_reports = compare_single_time(
        &tri_samples,
        &tri,
        &tri_law,
        profile.alpha,
        profile.seed + 1,
    );
    for mut r in tri_reports {
        if r.name == "chi2_endpoint_tree" {
            r.name = format!("{}_triangle", r.name);
            out.push(r);
        }
    }

    // Null calibration on exact limit-law samples.
    for (g, law, label) in [(&g, &law, "k2"), (&tri, &tri_law, "triangle")] {
        let tallies = run_calibration(
            g,
            law,
            profile.n,
            profile.calibration_reps,
            profile.alpha,
            profile.seed,
        );
        for (name, pass, total) in tallies {
            let frac = pass as f64 / total as f64;
            out.push(TestReport {
                name: format!("calibration_{label}_{name}"),
                statistic: frac,
                p_value: None,
                passed: frac >= 0.95,
                threshold: 0.95,
                sample_size: profile.n,
                seed: profile.seed,
                details: format!("{pass}/{total} null repetitions passed"),
            });
        }
    }
    out
}

/// Structural invariants over a trajectory batch: exact Kirchhoff balance
/// for both windows, window local-time sums within relative 1e-9, and every
/// complete last-exit tree spanning and rooted at the window endpoint. Any
/// violation fails the gate.
pub fn structural_invariant_report(n_trajectories: usize, seed: u64) -> TestReport {
    let cases = [
        (fixtures::k2(), 10.0, 50.0, (6 * n_trajectories) / 10),
        (fixtures::triangle(), 8.0, 40.0, (4 * n_trajectories) / 10),
    ];
    let mut violations = 0u64;
    let mut total = 0usize;
    for (g, sigma, sigma_prime, count) in cases {
        total += count;
        violations += (0..count as u64)
            .into_par_iter()
            .map(|idx| {
                let mut rng = trajectory_rng(seed, idx);
                let rec = simulate_two_scales(&g, 0, sigma, sigma_prime, &mut rng);
                let mut bad = 0u64;
                if !check_kirchhoff_int(&g, &rec.k, Some(0), Some(rec.end1)) {
                    bad += 1;
                }
                if !check_kirchhoff_int(&g, &rec.k_prime, Some(rec.end1), Some(rec.end2)) {
                    bad += 1;
                }
                let sum: f64 = rec.l.iter().sum();
                if (sum - sigma).abs() > 1e-9 * sigma {
                    bad += 1;
                }
                let sum_p: f64 = rec.l_prime.iter().sum();
                if (sum_p - sigma_prime).abs() > 1e-9 * sigma_prime {
                    bad += 1;
                }
                if let LastExit::Tree(t) = &rec.tree1 {
                    if !t.is_spanning_toward(&g, rec.end1) {
                        bad += 1;
                    }
                }
                if let LastExit::Tree(t) = &rec.tree2 {
                    if !t.is_spanning_toward(&g, rec.end2) {
                        bad += 1;
                    }
                }
                bad
            })
            .sum::<u64>();
    }
    report(
        "structural_invariants",
        violations as f64,
        0.0,
        violations == 0,
        format!("{total} trajectories, {violations} violations"),
    )
}

/// Reports prefixed `diag_` are contextual companions (for example the
/// exact-finite-window comparison that separates simulator error from the
/// genuine finite-window bias); they carry their own pass flag but do not
/// gate the suite.
pub fn is_gating(report: &TestReport) -> bool {
    !report.name.starts_with("diag_")
}

/// Runs the whole gate. `quick` shrinks the Monte Carlo sizes for a smoke
/// run; the release configuration uses the pinned sizes.
pub fn run_suite(quick: bool) -> Vec<TestReport> {
    let mut out = Vec::new();
    out.extend(normalization_reports());
    out.push(marginalization_report());
    out.extend(gaussian_current_reports());
    out.push(path_counting_report());
    out.extend(finite_time_mc_reports(
        if quick { 100_000 } else { 1_000_000 },
        2025,
    ));
    out.push(jacobian_report());
    out.push(density_ratio_report());
    out.extend(weak_convergence_reports(if quick {
        ConvergenceProfile::quick()
    } else {
        ConvergenceProfile::full()
    }));
    out.push(structural_invariant_report(
        if quick { 100_000 } else { 1_000_000 },
        777,
    ));
    out
}
