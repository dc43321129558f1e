//! Point evaluation of any named density from a config request.

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use vrjp_sigma_core::density;
use vrjp_sigma_core::graph::{CurrentVector, DirectedTree, IntegerCurrent, SpanningTree, WeightedGraph};

use crate::config::DensityRequest;

fn undirected_tree(g: &WeightedGraph, pairs: &[(usize, usize)]) -> Result<SpanningTree> {
    let mut edges = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let d = g
            .dir_edge(i, j)
            .ok_or_else(|| anyhow!("({i},{j}) is not an edge of the graph"))?;
        edges.push(d / 2);
    }
    edges.sort_unstable();
    Ok(SpanningTree { edges })
}

fn directed_tree(
    g: &WeightedGraph,
    root: usize,
    pairs: &[(usize, usize)],
) -> Result<DirectedTree> {
    DirectedTree::from_parent_pairs(g, root, pairs)
        .ok_or_else(|| anyhow!("pairs do not form a spanning tree directed toward {root}"))
}

fn current(g: &WeightedGraph, values: &[u64], source: usize, sink: usize) -> Result<IntegerCurrent> {
    if values.len() != g.directed_edge_count() {
        bail!(
            "crossing vector has {} entries, expected {}",
            values.len(),
            g.directed_edge_count()
        );
    }
    Ok(IntegerCurrent::new(values.to_vec(), source, sink))
}

/// Evaluates the request and returns the JSON response document.
pub fn evaluate(g: &WeightedGraph, req: &DensityRequest) -> Result<serde_json::Value> {
    let log_value = match req {
        DensityRequest::H22Tree { s, u, tree_prime } => {
            let t = undirected_tree(g, tree_prime)?;
            density::h22_tree_density(g, s, u, &t)?.log_value
        }
        DensityRequest::H22Extended {
            kappa,
            kappa_prime,
            s,
            v,
            u,
            i1,
            i1_prime,
            tree,
            tree_prime,
        } => {
            let t = undirected_tree(g, tree)?;
            let tp = undirected_tree(g, tree_prime)?;
            density::h22_extended_density(g, kappa, kappa_prime, s, v, u, *i1, *i1_prime, &t, &tp)?
                .log_value
        }
        DensityRequest::FullFieldMarginal {
            s,
            u,
            i1,
            i1_prime,
            tree,
            tree_prime,
        } => {
            let t = undirected_tree(g, tree)?;
            let tp = undirected_tree(g, tree_prime)?;
            density::full_field_marginal_density(g, s, u, *i1, *i1_prime, &t, &tp)?.log_value
        }
        DensityRequest::SingleScaleMarginal { kappa, v, i1, tree } => {
            let t = undirected_tree(g, tree)?;
            let c = CurrentVector {
                values: kappa.clone(),
            };
            density::single_scale_marginal_density(g, &c, v, *i1, &t)?.log_value
        }
        DensityRequest::CrossingWeight {
            k,
            l,
            tree_root,
            tree_directed,
        } => {
            let t = directed_tree(g, *tree_root, tree_directed)?;
            let k = current(g, k, g.root(), *tree_root)?;
            density::crossing_weight(g, &k, l, &t).log_value
        }
        DensityRequest::FiniteTime {
            k,
            k_prime,
            l,
            l_prime,
            i1,
            i1_prime,
            tree_directed,
            tree_prime_directed,
        } => {
            let t = directed_tree(g, *i1, tree_directed)?;
            let tp = directed_tree(g, *i1_prime, tree_prime_directed)?;
            let kc = current(g, k, g.root(), *i1)?;
            let kpc = current(g, k_prime, *i1, *i1_prime)?;
            density::finite_time_density(g, &kc, &kpc, l, l_prime, *i1, *i1_prime, &t, &tp)?
                .log_value
        }
        DensityRequest::PathCount {
            k,
            i1,
            tree_directed,
        } => {
            let t = directed_tree(g, *i1, tree_directed)?;
            let kc = current(g, k, g.root(), *i1)?;
            let count = density::path_count(g, &kc, &t, g.root(), *i1)
                .context("path count inputs invalid")?;
            return Ok(json!({
                "name": "path_count",
                "count": count.to_string(),
            }));
        }
        DensityRequest::VolumeFactor { k, l, i1 } => {
            let kc = current(g, k, g.root(), *i1)?;
            density::volume_factor(g, &kc, l, *i1).log_value
        }
        DensityRequest::GaussianCurrentIntegral {
            omega_prime,
            squared,
        } => {
            if omega_prime.len() != g.edge_count() {
                bail!(
                    "omega' has {} entries, expected {}",
                    omega_prime.len(),
                    g.edge_count()
                );
            }
            let value = density::gaussian_current_integral(g, omega_prime, *squared);
            return Ok(json!({
                "name": "gaussian_current_integral",
                "value": value,
                "log_value": value.ln(),
            }));
        }
        DensityRequest::LocalTimeReference {
            l,
            l_prime,
            sigma,
            sigma_prime,
        } => {
            density::local_time_reference_density(g, l, l_prime, *sigma, *sigma_prime, g.root())?
                .log_value
        }
    };
    let name = serde_json::to_value(req)?
        .get("name")
        .cloned()
        .unwrap_or_default();
    Ok(json!({
        "name": name,
        "log_value": log_value,
        "value": log_value.exp(),
    }))
}
