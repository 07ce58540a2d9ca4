//! Synthetic graphs, model instances and sample pools.

use std::path::PathBuf;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::diffusion;
use crate::graph::Graph;
use crate::instance::{CltInstance, InstanceError};
use crate::rng::{rng_from_seed, substream, CltRng};
use crate::scaled::{pow10, MAX_PRECISION};
use crate::status::BinaryMatrix;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("edge list line {line}: {message}")]
    EdgeList { line: usize, message: String },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Diffusion(#[from] diffusion::DiffusionError),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// The 2x2 initiator producing ~2655 edges on 1024 nodes at power 10.
pub const DEFAULT_KRONECKER_INITIATOR: [[f64; 2]; 2] = [[0.9, 0.5], [0.5, 0.3]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `w = 1 / (indeg(target) + s/7)` rounded toward zero.
    WeightedCascade,
    /// Uniform draws normalized so each target's in-weights sum to exactly 1.
    UniformNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphRecipe {
    Kronecker { initiator: [[f64; 2]; 2], power: u32 },
    PowerLaw { nodes: usize, out_degree: usize },
    Import { path: PathBuf, nodes: Option<usize> },
}

/// Everything needed to regenerate an instance and its sample pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub graph: GraphRecipe,
    pub cascades: usize,
    pub precision: u32,
    pub scheme: WeightScheme,
    pub seed_fraction: (f64, f64),
    pub seed: u64,
}

impl GenSpec {
    pub fn check(&self) -> Result<(), ForgeError> {
        if let GraphRecipe::Kronecker { initiator, power } = &self.graph {
            check_initiator(initiator)?;
            if *power == 0 {
                return Err(ForgeError::InvalidParameter("kronecker power must be >= 1".into()));
            }
        }
        if self.cascades == 0 {
            return Err(ForgeError::InvalidParameter("at least one cascade is required".into()));
        }
        if self.precision == 0 || self.precision > MAX_PRECISION {
            return Err(ForgeError::InvalidParameter(format!(
                "precision must be in 1..={MAX_PRECISION}"
            )));
        }
        let (lo, hi) = self.seed_fraction;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(ForgeError::InvalidParameter(format!(
                "bad seed fraction range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

fn check_initiator(initiator: &[[f64; 2]; 2]) -> Result<(), ForgeError> {
    if initiator.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(ForgeError::InvalidParameter(format!(
            "initiator probabilities must lie in [0, 1]: {initiator:?}"
        )));
    }
    Ok(())
}

/// Edge probability of `(i, j)` in the `power`-fold Kronecker product.
pub fn kronecker_probability(initiator: &[[f64; 2]; 2], power: u32, i: usize, j: usize) -> f64 {
    (0..power).map(|l| initiator[(i >> l) & 1][(j >> l) & 1]).product()
}

/// Stochastic Kronecker graph on `2^power` nodes, one Bernoulli draw per
/// ordered pair; self-loops are discarded.
pub fn gen_kronecker(initiator: &[[f64; 2]; 2], power: u32, seed: u64) -> Result<Graph, ForgeError> {
    check_initiator(initiator)?;
    if power == 0 || power > 16 {
        return Err(ForgeError::InvalidParameter(format!(
            "kronecker power {power} outside 1..=16"
        )));
    }
    let n = 1usize << power;
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = kronecker_probability(initiator, power, i, j);
            let draw: f64 = rng.gen();
            if draw < p && i != j {
                edges.push((i, j));
            }
        }
    }
    Ok(Graph::new(n, edges).expect("kronecker edges are unique"))
}

/// Directed preferential attachment.
///
/// Nodes `0..=m` start as a tournament (each sends an edge to every earlier
/// node). Every later node sends `m` edges to distinct earlier nodes chosen
/// with probability proportional to in-degree + 1.
pub fn gen_power_law(n: usize, m: usize, seed: u64) -> Result<Graph, ForgeError> {
    if m == 0 || n <= m {
        return Err(ForgeError::InvalidParameter(format!(
            "power law needs n > m >= 1, got n={n}, m={m}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::with_capacity(n * m);
    // urn holds each node once plus once per received edge
    let mut urn: Vec<usize> = Vec::with_capacity(n + n * m);
    for v in 0..=m {
        urn.push(v);
        for u in 0..v {
            edges.push((v, u));
            urn.push(u);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for v in (m + 1)..n {
        targets.clear();
        while targets.len() < m {
            let t = urn[rng.gen_range(0..urn.len() as u64) as usize];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        urn.push(v);
        for &t in &targets {
            edges.push((v, t));
            urn.push(t);
        }
    }
    Ok(Graph::new(n, edges).expect("preferential attachment edges are unique"))
}

/// Parses a whitespace- or comma-separated `src dst` edge list.
///
/// Blank lines and lines starting with `#` or `%` are skipped. Indices are
/// treated as 0-based if any index is 0, otherwise 1-based. Self-loops and
/// duplicate edges are dropped. `nodes` overrides the inferred node count,
/// which keeps trailing isolated nodes.
pub fn parse_edge_list(text: &str, nodes: Option<usize>) -> Result<Graph, ForgeError> {
    let mut raw = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let mut fields = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty());
        let mut next = |what: &str| -> Result<u64, ForgeError> {
            let f = fields.next().ok_or_else(|| ForgeError::EdgeList {
                line: k + 1,
                message: format!("missing {what}"),
            })?;
            f.parse().map_err(|_| ForgeError::EdgeList {
                line: k + 1,
                message: format!("bad {what} {f:?}"),
            })
        };
        let src = next("source")?;
        let dst = next("target")?;
        raw.push((src, dst));
    }
    let min = raw.iter().flat_map(|&(a, b)| [a, b]).min().unwrap_or(0);
    let offset = if min == 0 { 0 } else { 1 };
    let max = raw.iter().flat_map(|&(a, b)| [a, b]).max();
    let inferred = max.map(|m| (m - offset + 1) as usize).unwrap_or(0);
    let n = match nodes {
        Some(n) if n < inferred => {
            return Err(ForgeError::InvalidParameter(format!(
                "edge list references {inferred} nodes but {n} were declared"
            )))
        }
        Some(n) => n,
        None => inferred,
    };
    let edges = raw
        .into_iter()
        .map(|(a, b)| ((a - offset) as usize, (b - offset) as usize));
    Ok(Graph::from_edges_lossy(n, edges))
}

pub fn import_edge_list(path: &std::path::Path, nodes: Option<usize>) -> Result<Graph, ForgeError> {
    let text = std::fs::read_to_string(path).map_err(|source| ForgeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_edge_list(&text, nodes)
}

pub fn build_graph(recipe: &GraphRecipe, seed: u64) -> Result<Graph, ForgeError> {
    match recipe {
        GraphRecipe::Kronecker { initiator, power } => gen_kronecker(initiator, *power, seed),
        GraphRecipe::PowerLaw { nodes, out_degree } => gen_power_law(*nodes, *out_degree, seed),
        GraphRecipe::Import { path, nodes } => import_edge_list(path, *nodes),
    }
}

/// Weighted-cascade weight in units: `floor(10^q / (indeg + s/7))` for the
/// 1-based cascade number `s`.
pub fn weighted_cascade_units(in_degree: usize, cascade_number: usize, precision: u32) -> i64 {
    let num = 7 * pow10(precision);
    let den = 7 * in_degree as i64 + cascade_number as i64;
    num / den
}

/// Splits `10^q` units over `raw` proportionally, largest remainder first;
/// ties go to the earlier entry.
fn apportion(raw: &[f64], precision: u32) -> Vec<i64> {
    let total_units = pow10(precision);
    let total: f64 = raw.iter().sum();
    let shares: Vec<f64> = if total > 0.0 {
        raw.iter().map(|r| r / total * total_units as f64).collect()
    } else {
        vec![total_units as f64 / raw.len() as f64; raw.len()]
    };
    let mut units: Vec<i64> = shares.iter().map(|s| s.floor() as i64).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = total_units - units.iter().sum::<i64>();
    // floating-point shares can overshoot by a unit; take it back from the smallest remainders
    for &k in order.iter().rev() {
        if remaining >= 0 {
            break;
        }
        if units[k] > 0 {
            units[k] -= 1;
            remaining += 1;
        }
    }
    for &k in order.iter().cycle() {
        if remaining <= 0 {
            break;
        }
        units[k] += 1;
        remaining -= 1;
    }
    units
}

/// Draws weights and thresholds for `graph`.
///
/// Thresholds are uniform on `{10^-q, 2*10^-q, ..., 1}`. Under the
/// uniform-normalized scheme a node without in-edges keeps an empty weight
/// column (its in-weights cannot sum to one); it is logged, not rejected.
pub fn make_instance(
    graph: Graph,
    cascades: usize,
    precision: u32,
    scheme: WeightScheme,
    seed: u64,
) -> Result<CltInstance, ForgeError> {
    if cascades == 0 {
        return Err(ForgeError::InvalidParameter("at least one cascade is required".into()));
    }
    if precision > MAX_PRECISION {
        return Err(ForgeError::InvalidParameter(format!("precision {precision} too large")));
    }
    let mut rng = rng_from_seed(seed);
    let n = graph.node_count();
    let mut weights = vec![0i64; graph.edge_count() * cascades];
    match scheme {
        WeightScheme::WeightedCascade => {
            for v in 0..n {
                let d = graph.in_degree(v);
                for &(_, e) in graph.in_edges(v) {
                    for s in 0..cascades {
                        weights[e * cascades + s] = weighted_cascade_units(d, s + 1, precision);
                    }
                }
            }
        }
        WeightScheme::UniformNormalized => {
            let mut isolated = 0usize;
            for v in 0..n {
                let in_edges = graph.in_edges(v);
                if in_edges.is_empty() {
                    isolated += 1;
                    continue;
                }
                for s in 0..cascades {
                    let raw: Vec<f64> = in_edges.iter().map(|_| rng.gen::<f64>()).collect();
                    for (&(_, e), u) in in_edges.iter().zip(apportion(&raw, precision)) {
                        weights[e * cascades + s] = u;
                    }
                }
            }
            if isolated > 0 {
                log::warn!("{isolated} nodes have no in-edges; their weight columns stay empty");
            }
        }
    }
    let one = pow10(precision);
    let thresholds = (0..n * cascades).map(|_| rng.gen_range(1..=one)).collect();
    Ok(CltInstance::from_units(
        graph, cascades, precision, weights, thresholds,
    )?)
}

/// Seed-count range `[ceil(lo*n), floor(hi*n)]`, widened to at least one value.
pub fn seed_count_range(n: usize, fraction: (f64, f64)) -> (usize, usize) {
    // the tolerance absorbs representation error such as 0.1 * 30 = 3.0000000000000004
    let lo = (fraction.0 * n as f64 - 1e-9).ceil().max(0.0) as usize;
    let hi = (fraction.1 * n as f64 + 1e-9).floor().max(0.0) as usize;
    let lo = lo.min(n);
    (lo, hi.clamp(lo, n))
}

/// Random initial status with seed count uniform over the default
/// `[0.1 N, 0.5 N]` range.
pub fn sample_initial(n: usize, cascades: usize, rng: &mut CltRng) -> BinaryMatrix {
    sample_initial_in(n, cascades, (0.1, 0.5), rng)
}

pub fn sample_initial_in(n: usize, cascades: usize, fraction: (f64, f64), rng: &mut CltRng) -> BinaryMatrix {
    let (lo, hi) = seed_count_range(n, fraction);
    let count = rng.gen_range(lo as u64..=hi as u64) as usize;
    sample_initial_with_count(n, cascades, count, rng)
}

/// `count` distinct seed nodes, each assigned to a uniformly random cascade.
pub fn sample_initial_with_count(n: usize, cascades: usize, count: usize, rng: &mut CltRng) -> BinaryMatrix {
    let mut m = BinaryMatrix::zeros(n, cascades);
    if n == 0 {
        return m;
    }
    for v in index::sample(rng, n, count.min(n)).into_iter() {
        let s = rng.gen_range(0..cascades as u64) as usize;
        m.set(v, s, true);
    }
    m
}

/// `k` samples, sample `i` drawn from stream `i` of `seed`.
pub fn generate_dataset(instance: &CltInstance, k: usize, seed: u64) -> Result<Dataset, ForgeError> {
    generate_dataset_in(instance, k, (0.1, 0.5), seed)
}

pub fn generate_dataset_in(
    instance: &CltInstance,
    k: usize,
    fraction: (f64, f64),
    seed: u64,
) -> Result<Dataset, ForgeError> {
    let n = instance.node_count();
    let s = instance.cascade_count();
    let samples = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let init = sample_initial_in(n, s, fraction, &mut rng);
            diffusion::run(instance, &init)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(n, s, instance.precision(), samples).expect("simulated samples are consistent"))
}
