//! Seeded statistical tests used by the ensemble harness.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let term = (-2.0 * (j as f64) * (j as f64) * x * x).exp();
        if term < 1e-18 {
            break;
        }
        sum += if j % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test of `samples` against the continuous
/// CDF `cdf`. Returns `(statistic, p_value)`; the p-value uses the
/// asymptotic Kolmogorov law with Stephens' finite-sample correction.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> (f64, f64) {
    assert!(!samples.is_empty());
    samples.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    let n = samples.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x).clamp(0.0, 1.0);
        let lower = (f - i as f64 / n).abs();
        let upper = ((i + 1) as f64 / n - f).abs();
        sup = sup.max(lower).max(upper);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * sup;
    (sup, kolmogorov_sf(lambda))
}

/// Pearson chi-square test of observed category counts against expected
/// probabilities. Returns `(statistic, p_value, dof)`.
pub fn chi_square_test(observed: &[u64], expected_probs: &[f64]) -> (f64, f64, usize) {
    assert_eq!(observed.len(), expected_probs.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let expect = p * n as f64;
        assert!(
            expect > 0.0,
            "every category needs positive expected probability"
        );
        stat += (o as f64 - expect).powi(2) / expect;
    }
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("valid dof");
    let p = 1.0 - dist.cdf(stat);
    (stat, p, dof)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::Normal;
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Least-squares slope of `y` against `x`.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn kolmogorov_sf_reference_values() {
        // Q(1.0) ~ 0.26999967; Q(1.358) ~ 0.0500 (the classic 5% point).
        assert!((kolmogorov_sf(1.0) - 0.26999967).abs() < 1e-6);
        assert!((kolmogorov_sf(1.358) - 0.05003).abs() < 5e-4);
    }

    #[test]
    fn ks_accepts_true_uniform() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks_test(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn ks_rejects_shifted_uniform() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut xs: Vec<f64> = (0..20_000).map(|_| 0.9 * rng.random::<f64>()).collect();
        let (_, p) = ks_test(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(p < 1e-6);
    }

    #[test]
    fn chi_square_accepts_fair_die() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0u64; 6];
        for _ in 0..60_000 {
            counts[rng.random_range(0..6)] += 1;
        }
        let (_, p, dof) = chi_square_test(&counts, &[1.0 / 6.0; 6]);
        assert_eq!(dof, 5);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn chi_square_rejects_biased_die() {
        let counts = [12_000u64, 10_000, 10_000, 10_000, 10_000, 8_000];
        let (_, p, _) = chi_square_test(&counts, &[1.0 / 6.0; 6]);
        assert!(p < 1e-10);
    }
}
