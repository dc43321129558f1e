//! Run configuration: a JSON document with defaults applied and echoed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vrjp_sigma_core::graph::{build_graph, GraphError, WeightedGraph};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{0}`: {1}")]
    Validation(&'static str, String),
    #[error("graph file error: {0}")]
    GraphFile(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Graph input: either a text file (`root R` header plus `i j W` lines) or
/// an inline edge list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GraphSource {
    Path { path: PathBuf },
    Inline { edges: Vec<(usize, usize, f64)>, root: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSource,
    /// Reference vertex; defaults to the graph root.
    #[serde(default)]
    pub i0: Option<usize>,
    pub sigma: f64,
    /// Second window length; defaults to `sigma^3`.
    #[serde(default)]
    pub sigma_prime: Option<f64>,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_m")]
    pub m_truncation: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Dump the first this-many trajectories' events to CSV.
    #[serde(default)]
    pub trajectory_dump: usize,
    /// Request evaluated by the `density` subcommand.
    #[serde(default)]
    pub density: Option<DensityRequest>,
}

fn default_m() -> f64 {
    8.0
}
fn default_alpha() -> f64 {
    0.01
}
fn default_quad_tol() -> f64 {
    1e-6
}

/// Parses the JSON text, applies defaults, and validates. The returned
/// config serializes with every default filled in, so
/// parse -> serialize -> parse is the identity.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        return Err(ConfigError::Validation("sigma", format!("{}", cfg.sigma)));
    }
    let sigma_prime = cfg
        .sigma_prime
        .unwrap_or(cfg.sigma * cfg.sigma * cfg.sigma);
    if !(sigma_prime > 0.0 && sigma_prime.is_finite()) {
        return Err(ConfigError::Validation(
            "sigma_prime",
            format!("{sigma_prime}"),
        ));
    }
    cfg.sigma_prime = Some(sigma_prime);
    if cfg.n == 0 {
        return Err(ConfigError::Validation("n", "must be positive".into()));
    }
    if !(cfg.m_truncation > 0.0) {
        return Err(ConfigError::Validation(
            "m_truncation",
            format!("{}", cfg.m_truncation),
        ));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(ConfigError::Validation("alpha", format!("{}", cfg.alpha)));
    }
    if !(cfg.quad_tol > 0.0) {
        return Err(ConfigError::Validation(
            "quad_tol",
            format!("{}", cfg.quad_tol),
        ));
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn sigma_prime(&self) -> f64 {
        self.sigma_prime.expect("filled by parse_config")
    }

    /// Loads and validates the graph, resolving relative paths against
    /// `base`.
    pub fn load_graph(&self, base: &Path) -> Result<WeightedGraph, ConfigError> {
        match &self.graph {
            GraphSource::Inline { edges, root } => Ok(build_graph(edges, *root)?),
            GraphSource::Path { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let text = std::fs::read_to_string(&full).map_err(|source| ConfigError::Io {
                    path: full.clone(),
                    source,
                })?;
                parse_graph_file(&text).map_err(|e| ConfigError::GraphFile(e))
            }
        }
    }

    /// Reference vertex after defaulting.
    pub fn i0_for(&self, g: &WeightedGraph) -> Result<usize, ConfigError> {
        let i0 = self.i0.unwrap_or(g.root());
        if i0 >= g.vertex_count() {
            return Err(ConfigError::Validation("i0", format!("{i0}")));
        }
        Ok(i0)
    }
}

/// Text format: optional comment lines starting with `#`, one `root R`
/// header line, and one `i j W` line per undirected edge.
pub fn parse_graph_file(text: &str) -> Result<WeightedGraph, String> {
    let mut root: Option<usize> = None;
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "root" {
            if fields.len() != 2 {
                return Err(format!("line {}: malformed root header", lineno + 1));
            }
            root = Some(
                fields[1]
                    .parse()
                    .map_err(|_| format!("line {}: bad root index", lineno + 1))?,
            );
            continue;
        }
        if fields.len() != 3 {
            return Err(format!(
                "line {}: expected `i j W` or `root R`",
                lineno + 1
            ));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| format!("line {}: bad vertex", lineno + 1))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| format!("line {}: bad vertex", lineno + 1))?;
        let w: f64 = fields[2]
            .parse()
            .map_err(|_| format!("line {}: bad weight", lineno + 1))?;
        edges.push((i, j, w));
    }
    let root = root.ok_or("missing `root R` header")?;
    build_graph(&edges, root).map_err(|e| e.to_string())
}

/// Point-evaluation request for the `density` subcommand. Undirected trees
/// are given as vertex pairs, directed trees as `[vertex, parent]` pairs
/// with the root listed separately. Currents on directed edges follow the
/// canonical order: edges sorted by endpoints, each contributing
/// `(min->max)` then `(max->min)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DensityRequest {
    H22Tree {
        s: Vec<f64>,
        u: Vec<f64>,
        tree_prime: Vec<(usize, usize)>,
    },
    H22Extended {
        kappa: Vec<f64>,
        kappa_prime: Vec<f64>,
        s: Vec<f64>,
        v: Vec<f64>,
        u: Vec<f64>,
        i1: usize,
        i1_prime: usize,
        tree: Vec<(usize, usize)>,
        tree_prime: Vec<(usize, usize)>,
    },
    FullFieldMarginal {
        s: Vec<f64>,
        u: Vec<f64>,
        i1: usize,
        i1_prime: usize,
        tree: Vec<(usize, usize)>,
        tree_prime: Vec<(usize, usize)>,
    },
    SingleScaleMarginal {
        kappa: Vec<f64>,
        v: Vec<f64>,
        i1: usize,
        tree: Vec<(usize, usize)>,
    },
    CrossingWeight {
        k: Vec<u64>,
        l: Vec<f64>,
        tree_root: usize,
        tree_directed: Vec<(usize, usize)>,
    },
    FiniteTime {
        k: Vec<u64>,
        k_prime: Vec<u64>,
        l: Vec<f64>,
        l_prime: Vec<f64>,
        i1: usize,
        i1_prime: usize,
        tree_directed: Vec<(usize, usize)>,
        tree_prime_directed: Vec<(usize, usize)>,
    },
    PathCount {
        k: Vec<u64>,
        i1: usize,
        tree_directed: Vec<(usize, usize)>,
    },
    VolumeFactor {
        k: Vec<u64>,
        l: Vec<f64>,
        i1: usize,
    },
    GaussianCurrentIntegral {
        omega_prime: Vec<f64>,
        #[serde(default)]
        squared: bool,
    },
    LocalTimeReference {
        l: Vec<f64>,
        l_prime: Vec<f64>,
        sigma: f64,
        sigma_prime: f64,
    },
}
