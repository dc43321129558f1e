//! Release acceptance suite: one test per gate criterion, each printing a
//! pass/fail line per check. Every tolerance is pinned in `suite`; the
//! Monte Carlo sizes here are the release sizes, so this target is the slow
//! one (the weak-convergence battery simulates ~4e11 exact jump events).

use std::time::Instant;

use vrjp_sigma_core::harness::TestReport;
use vrjp_sigma_core::suite;

fn finish(criterion: &str, reports: &[TestReport], t0: Instant) {
    let mut all = true;
    for r in reports {
        let gating = suite::is_gating(r);
        let status = match (gating, r.passed) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, true) => "info",
            (false, false) => "info(fail)",
        };
        let pv = match r.p_value {
            Some(p) => format!(", p = {p:.4e}"),
            None => String::new(),
        };
        println!(
            "[{status}] {criterion} :: {:<34} statistic {:+.4e}{pv}  ({})",
            r.name, r.statistic, r.details
        );
        if gating {
            all &= r.passed;
        }
    }
    println!(
        "criterion {criterion}: {} in {:.1?}",
        if all { "PASS" } else { "FAIL" },
        t0.elapsed()
    );
    assert!(all, "criterion {criterion} failed; see the lines above");
}

#[test]
fn c1_normalization() {
    let t0 = Instant::now();
    let reports = suite::normalization_reports();
    finish("1 (normalization)", &reports, t0);
}

#[test]
fn c2_marginalization() {
    let t0 = Instant::now();
    let reports = vec![suite::marginalization_report()];
    finish("2 (marginalization)", &reports, t0);
}

#[test]
fn c3_gaussian_current_integral() {
    let t0 = Instant::now();
    let reports = suite::gaussian_current_reports();
    finish("3 (gaussian current integral)", &reports, t0);
}

#[test]
fn c4_path_counting() {
    let t0 = Instant::now();
    let reports = vec![suite::path_counting_report()];
    finish("4 (path counting)", &reports, t0);
}

#[test]
fn c5_finite_time_density_vs_monte_carlo() {
    let t0 = Instant::now();
    let reports = suite::finite_time_mc_reports(1_000_000, 2025);
    finish("5 (finite-time density)", &reports, t0);
}

#[test]
fn c6_jacobian() {
    let t0 = Instant::now();
    let reports = vec![suite::jacobian_report()];
    finish("6 (jacobian)", &reports, t0);
}

#[test]
fn c7_limiting_density_ratio() {
    let t0 = Instant::now();
    let reports = vec![suite::density_ratio_report()];
    finish("7 (limiting density ratio)", &reports, t0);
}

#[test]
fn c8_weak_convergence() {
    let t0 = Instant::now();
    let reports = suite::weak_convergence_reports(suite::ConvergenceProfile::full());
    finish("8 (weak convergence)", &reports, t0);
}

#[test]
fn c9_structural_invariants() {
    let t0 = Instant::now();
    let reports = vec![suite::structural_invariant_report(1_000_000, 777)];
    finish("9 (structural invariants)", &reports, t0);
}
