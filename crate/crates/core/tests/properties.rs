//! Property tests over random small connected graphs.

use proptest::prelude::*;

use vrjp_sigma_core::density::path_count;
use vrjp_sigma_core::graph::{
    build_graph, check_kirchhoff_int, iota, iota_inv, CurrentVector, IntegerCurrent,
    WeightedGraph,
};
use vrjp_sigma_core::oracle::enumerate_paths;
use vrjp_sigma_core::simulate::{rescale, simulate_two_scales, trajectory_rng, within_truncation};

#[derive(Debug, Clone)]
struct GraphSpec {
    n: usize,
    parents: Vec<usize>,
    extra: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

fn arb_graph() -> impl Strategy<Value = GraphSpec> {
    (2usize..=5)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(0usize..1000, n - 1),
                proptest::collection::vec((0usize..1000, 0usize..1000), 0..4),
                proptest::collection::vec(0.2f64..2.5, n - 1 + 4),
            )
        })
        .prop_map(|(n, parents, extra, weights)| GraphSpec {
            n,
            parents,
            extra,
            weights,
        })
}

fn build(spec: &GraphSpec) -> WeightedGraph {
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut widx = 0;
    for v in 1..spec.n {
        edges.push((v, spec.parents[v - 1] % v, spec.weights[widx]));
        widx += 1;
    }
    for &(a, b) in &spec.extra {
        let (i, j) = (a % spec.n, b % spec.n);
        if i == j {
            continue;
        }
        let (lo, hi) = (i.min(j), i.max(j));
        if edges.iter().any(|&(x, y, _)| x.min(y) == lo && x.max(y) == hi) {
            continue;
        }
        edges.push((lo, hi, spec.weights[widx % spec.weights.len()]));
        widx += 1;
    }
    build_graph(&edges, 0).expect("constructed connected graph")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coordinate_maps_invert_each_other(spec in arb_graph(), raw in proptest::collection::vec(-5.0f64..5.0, 16)) {
        let g = build(&spec);
        let t0 = g.reference_tree();
        let dim = g.directed_edge_count() - (g.vertex_count() - 1);
        let coords: Vec<f64> = raw.iter().cycle().take(dim).copied().collect();
        let current = iota_inv(&g, &t0, &coords);
        // Reconstruction is sourceless by construction.
        let div = current.divergence(&g);
        for d in div {
            prop_assert!(d.abs() <= 1e-9);
        }
        let back = iota(&g, &t0, &current).unwrap();
        for (a, b) in back.iter().zip(&coords) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn matrix_tree_equality(spec in arb_graph(), seed in 0u64..1000) {
        let g = build(&spec);
        let mut rng = trajectory_rng(seed, 0);
        use rand::Rng;
        let omega: Vec<f64> = (0..g.edge_count()).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect();
        let by_trees: f64 = g
            .spanning_trees()
            .unwrap()
            .iter()
            .map(|t| t.edges.iter().map(|&e| omega[e]).product::<f64>())
            .sum();
        let by_det = g.tree_polynomial_det(&omega);
        prop_assert!((by_trees - by_det).abs() <= 1e-10 * by_trees.abs().max(by_det.abs()));
    }

    #[test]
    fn cycle_matrix_is_positive_definite_and_consistent(spec in arb_graph(), seed in 0u64..1000) {
        let g = build(&spec);
        let mut rng = trajectory_rng(seed, 1);
        use rand::Rng;
        let omega: Vec<f64> = (0..g.edge_count()).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect();
        let t0 = g.reference_tree();
        let b = g.cycle_matrix(&t0, &omega);
        if b.nrows() > 0 {
            prop_assert!(b.clone().cholesky().is_some());
            let det = b.lu().determinant();
            let prod: f64 = omega.iter().product();
            let tp = g.tree_polynomial(&omega);
            prop_assert!((det * prod - tp).abs() <= 1e-9 * tp);
        }
    }

    #[test]
    fn simulated_records_satisfy_structural_invariants(
        spec in arb_graph(),
        seed in 0u64..10_000,
        sigma in 1.0f64..20.0,
    ) {
        let g = build(&spec);
        let sigma_prime = 2.0 * sigma;
        let mut rng = trajectory_rng(seed, 7);
        let rec = simulate_two_scales(&g, 0, sigma, sigma_prime, &mut rng);
        prop_assert!(check_kirchhoff_int(&g, &rec.k, Some(0), Some(rec.end1)));
        prop_assert!(check_kirchhoff_int(&g, &rec.k_prime, Some(rec.end1), Some(rec.end2)));
        let sum: f64 = rec.l.iter().sum();
        let sum_p: f64 = rec.l_prime.iter().sum();
        prop_assert!((sum - sigma).abs() <= 1e-9 * sigma);
        prop_assert!((sum_p - sigma_prime).abs() <= 1e-9 * sigma_prime);
        if let Ok(resc) = rescale(&g, &rec, 0) {
            // Truncation events are monotone in the bound.
            let tight = within_truncation(&resc, 1.0);
            let loose = within_truncation(&resc, 5.0);
            prop_assert!(!tight || loose);
            prop_assert!(within_truncation(&resc, f64::INFINITY));
            // Roots of all rescaled fields vanish identically.
            prop_assert_eq!(resc.s[0], 0.0);
            prop_assert_eq!(resc.u[0], 0.0);
            prop_assert_eq!(resc.v[0], 0.0);
        }
    }

    #[test]
    fn path_count_matches_enumeration_on_random_currents(
        spec in arb_graph(),
        raw in proptest::collection::vec(0u64..3, 20),
    ) {
        let g = build(&spec);
        let dirs = g.directed_edge_count();
        let values: Vec<u64> = raw.iter().cycle().take(dirs).copied().collect();
        let total: u64 = values.iter().sum();
        prop_assume!(total >= 1 && total <= 8);
        for i1 in 0..g.vertex_count() {
            let current = IntegerCurrent::new(values.clone(), 0, i1);
            if !check_kirchhoff_int(&g, &current, Some(0), Some(i1)) {
                continue;
            }
            let brute = enumerate_paths(&g, 0, i1, &current).unwrap();
            for tree in g.directed_trees_toward(i1).unwrap() {
                let key: Vec<(usize, usize)> = (0..g.vertex_count())
                    .filter(|&v| v != i1)
                    .map(|v| (v, tree.parent[v].unwrap()))
                    .collect();
                let expect = brute.get(&key).copied().unwrap_or(0);
                let got = path_count(&g, &current, &tree, 0, i1).unwrap();
                prop_assert_eq!(got, num_bigint::BigUint::from(expect));
            }
        }
    }

    #[test]
    fn zero_current_is_sourceless(spec in arb_graph()) {
        let g = build(&spec);
        let zero = CurrentVector::zero(&g);
        let t0 = g.reference_tree();
        let coords = iota(&g, &t0, &zero).unwrap();
        prop_assert!(coords.iter().all(|&c| c == 0.0));
    }
}
