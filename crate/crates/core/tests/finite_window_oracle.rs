//! The exact finite-window law as an oracle: the closed-form joint density
//! summed over crossing numbers pins the law of the first-window field
//! component on the two-vertex graph with no Monte Carlo content. The
//! simulator must match it at every window length, and its distance to the
//! limit law quantifies the genuine finite-window bias.

use vrjp_sigma_core::graph::fixtures;
use vrjp_sigma_core::harness::limit::LimitLaw;
use vrjp_sigma_core::harness::run_single_scale_ensemble;
use vrjp_sigma_core::harness::stats::ks_test;
use vrjp_sigma_core::oracle::k2_exact_window_cdf;

#[test]
fn simulator_matches_exact_window_law_across_scales() {
    let g = fixtures::k2();
    for (sigma, seed) in [(20.0, 1u64), (80.0, 2), (200.0, 3)] {
        let exact = k2_exact_window_cdf(sigma, 1.0);
        let recs = run_single_scale_ensemble(&g, 0, sigma, 60_000, seed);
        let mut v1: Vec<f64> = recs
            .iter()
            .filter_map(|r| r.rescaled(&g, 0).map(|(_, v)| v[1]))
            .collect();
        let (stat, p) = ks_test(&mut v1, |x| exact.eval(x));
        assert!(
            p > 0.005,
            "sigma {sigma}: simulated field component disagrees with the exact law \
             (stat {stat}, p {p})"
        );
    }
}

#[test]
fn exact_window_law_approaches_limit_like_inverse_sigma() {
    let g = fixtures::k2();
    let law = LimitLaw::compute(&g, 0);
    let distance = |sigma: f64| {
        let exact = k2_exact_window_cdf(sigma, 1.0);
        let mut d = 0.0f64;
        for &x in &exact.xs {
            d = d.max((exact.eval(x) - law.v_cdfs[0].eval(x)).abs());
        }
        d
    };
    let d100 = distance(100.0);
    let d200 = distance(200.0);
    let d400 = distance(400.0);
    // Halving per doubling, with the scaled coefficient stabilizing.
    assert!((d100 / d200 - 2.0).abs() < 0.15, "d100 {d100} d200 {d200}");
    assert!((d200 / d400 - 2.0).abs() < 0.15, "d200 {d200} d400 {d400}");
    let coeff = d200 * 200.0;
    assert!(
        (1.0..2.0).contains(&coeff),
        "scaled finite-window bias coefficient {coeff}"
    );
}
