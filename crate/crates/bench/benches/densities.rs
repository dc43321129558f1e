//! Cost of the closed-form density evaluators and the tree polynomial.

use criterion::{criterion_group, criterion_main, Criterion};
use vrjp_sigma_core::density::{
    finite_time_density, h22_extended_density, limit_density_ratio,
};
use vrjp_sigma_core::graph::fixtures;
use vrjp_sigma_core::harness::{default_scan_point, matched_record};
use vrjp_sigma_core::simulate::{rescale, LastExit};

fn density_evaluators(c: &mut Criterion) {
    let g = fixtures::triangle();
    let point = default_scan_point(&g, 0);
    let rec = matched_record(&g, 0, 100.0, 1.0e6, &point).unwrap();
    let resc = rescale(&g, &rec, 0).unwrap();
    let (t1, t2) = match (&rec.tree1, &rec.tree2) {
        (LastExit::Tree(a), LastExit::Tree(b)) => (a.clone(), b.clone()),
        _ => unreachable!(),
    };
    let (s1, s2) = (t1.shadow(&g), t2.shadow(&g));

    c.bench_function("finite_time_density_triangle", |b| {
        b.iter(|| {
            finite_time_density(
                &g,
                &rec.k,
                &rec.k_prime,
                &rec.l,
                &rec.l_prime,
                rec.end1,
                rec.end2,
                &t1,
                &t2,
            )
            .unwrap()
        })
    });
    c.bench_function("extended_density_triangle", |b| {
        b.iter(|| {
            h22_extended_density(
                &g,
                &resc.kappa.values,
                &resc.kappa_prime.values,
                &resc.s,
                &resc.v,
                &resc.u,
                rec.end1,
                rec.end2,
                &s1,
                &s2,
            )
            .unwrap()
        })
    });
    c.bench_function("limit_density_ratio_triangle", |b| {
        b.iter(|| limit_density_ratio(&g, &rec, 0).unwrap())
    });
    c.bench_function("tree_polynomial_cycle4_chord", |b| {
        let g = fixtures::cycle4_chord();
        let omega: Vec<f64> = (0..g.edge_count()).map(|e| 0.4 + 0.1 * e as f64).collect();
        b.iter(|| g.tree_polynomial(&omega))
    });
}

criterion_group!(benches, density_evaluators);
criterion_main!(benches);
