//! Stable CSV and JSON emission. Reals are written with 17 significant
//! digits so files round-trip bit-exactly and identical seeds give
//! byte-identical output.

use std::fmt::Write as _;

use vrjp_sigma_core::graph::WeightedGraph;
use vrjp_sigma_core::harness::{EnsembleResult, MarginalSummary, SampleOutcome, TestReport};
use vrjp_sigma_core::simulate::{rescale, LastExit, ObservableRecord};

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn tree_cell(g: &WeightedGraph, t: &LastExit) -> String {
    match t {
        LastExit::Incomplete => String::new(),
        LastExit::Tree(tree) => {
            let mut edges: Vec<String> = (0..g.vertex_count())
                .filter(|&v| v != tree.root)
                .map(|v| format!("{v}-{}", tree.parent[v].unwrap()))
                .collect();
            edges.sort();
            edges.join(" ")
        }
    }
}

/// Header of the observables CSV: identity and endpoints, per-vertex local
/// times of both windows, per-directed-edge crossing counts, then the
/// rescaled coordinates (filled only on in-event rows) and the serialized
/// trees.
pub fn observables_header(g: &WeightedGraph) -> String {
    let mut cols: Vec<String> = vec![
        "trajectory".into(),
        "in_O".into(),
        "end1".into(),
        "end2".into(),
    ];
    let n = g.vertex_count();
    for i in 0..n {
        cols.push(format!("l_{i}"));
    }
    for i in 0..n {
        cols.push(format!("lp_{i}"));
    }
    for d in 0..g.directed_edge_count() {
        cols.push(format!("k_{}_{}", g.dir_tail(d), g.dir_head(d)));
    }
    for d in 0..g.directed_edge_count() {
        cols.push(format!("kp_{}_{}", g.dir_tail(d), g.dir_head(d)));
    }
    for d in 0..g.directed_edge_count() {
        cols.push(format!("kappa_{}_{}", g.dir_tail(d), g.dir_head(d)));
    }
    for d in 0..g.directed_edge_count() {
        cols.push(format!("kappap_{}_{}", g.dir_tail(d), g.dir_head(d)));
    }
    for i in 0..n {
        cols.push(format!("s_{i}"));
    }
    for i in 0..n {
        cols.push(format!("u_{i}"));
    }
    for i in 0..n {
        cols.push(format!("v_{i}"));
    }
    cols.push("tree1".into());
    cols.push("tree2".into());
    cols.join(",")
}

pub fn observables_row(
    g: &WeightedGraph,
    i0: usize,
    trajectory: u64,
    rec: &ObservableRecord,
) -> String {
    let mut row = String::new();
    write!(
        row,
        "{trajectory},{},{},{}",
        rec.in_o, rec.end1, rec.end2
    )
    .unwrap();
    for x in rec.l.iter().chain(rec.l_prime.iter()) {
        row.push(',');
        row.push_str(&fmt_real(*x));
    }
    for k in rec.k.values.iter().chain(rec.k_prime.values.iter()) {
        write!(row, ",{k}").unwrap();
    }
    let resc = rescale(g, rec, i0).ok();
    let n = g.vertex_count();
    let dirs = g.directed_edge_count();
    match &resc {
        Some(r) => {
            for x in r.kappa.values.iter().chain(r.kappa_prime.values.iter()) {
                row.push(',');
                row.push_str(&fmt_real(*x));
            }
            for x in r.s.iter().chain(r.u.iter()).chain(r.v.iter()) {
                row.push(',');
                row.push_str(&fmt_real(*x));
            }
        }
        None => {
            for _ in 0..(2 * dirs + 3 * n) {
                row.push(',');
            }
        }
    }
    row.push(',');
    row.push_str(&tree_cell(g, &rec.tree1));
    row.push(',');
    row.push_str(&tree_cell(g, &rec.tree2));
    row
}

pub fn summaries_csv(summaries: &[MarginalSummary]) -> String {
    let mut out = String::from("marginal,count,mean,variance,min,max\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.name,
            s.count,
            fmt_real(s.mean),
            fmt_real(s.variance),
            fmt_real(s.min),
            fmt_real(s.max)
        ));
    }
    out
}

pub fn reports_json(reports: &[TestReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

pub fn print_report_line(r: &TestReport) {
    let status = if r.passed { "PASS" } else { "FAIL" };
    let pv = match r.p_value {
        Some(p) => format!(", p = {p:.4}"),
        None => String::new(),
    };
    println!(
        "[{status}] {:<36} statistic {:+.4e}{pv}  ({})",
        r.name, r.statistic, r.details
    );
}

pub fn ensemble_summary_lines(ens: &EnsembleResult) {
    println!(
        "ensemble: n = {}, seed = {}, sigma = {}, sigma' = {}, in-event rate = {:.6}",
        ens.config.n, ens.config.seed, ens.config.sigma, ens.config.sigma_prime, ens.in_o_rate
    );
    let kept = ens
        .samples
        .iter()
        .filter(|s| matches!(s, SampleOutcome::InO(_)))
        .count();
    println!("         {kept} rescaled samples available");
}
