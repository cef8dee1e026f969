//! Attributed graphs and the fairness-reweighted adjacency.
//!
//! Each undirected edge `(i, j)` gets a raw weight
//!
//! ```text
//! alpha_ij = max(clamp(cos(x_i, x_j), floor, 1) * exp(-gamma * [s_i != s_j]), floor)
//! ```
//!
//! so cross-group edges are damped but never removed. Unit self-loops are
//! added and the result is symmetrically normalized,
//! `w_ij = alpha_ij / sqrt(deg(i) * deg(j))` with `deg(i) = sum_j alpha_ij`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Attributed, undirected graph with a binary sensitive attribute and a
/// real-valued target per node. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    features: Tensor,
    edges: Vec<(usize, usize)>,
    sensitive: Vec<u8>,
    targets: Vec<f64>,
}

impl Graph {
    /// Validates and builds a graph. Edges are stored as `(min, max)` pairs;
    /// duplicates (in either orientation) and self-loops are rejected.
    pub fn new(
        features: Tensor,
        edges: Vec<(usize, usize)>,
        sensitive: Vec<u8>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let n = features.rows();
        if sensitive.len() != n || targets.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{n} feature rows but {} sensitive values and {} targets",
                sensitive.len(),
                targets.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidGraph("features contain non-finite values".into()));
        }
        if let Some(i) = targets.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidGraph(format!("target of node {i} is not finite")));
        }
        if let Some(i) = sensitive.iter().position(|&s| s > 1) {
            return Err(Error::InvalidGraph(format!(
                "sensitive value of node {i} is {}, expected 0 or 1",
                sensitive[i]
            )));
        }
        let mut seen = BTreeSet::new();
        let mut canonical = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            canonical.push(key);
        }
        Ok(Graph {
            features,
            edges: canonical,
            sensitive,
            targets,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Same structure with a different feature matrix of the same row count.
    pub fn with_features(&self, features: Tensor) -> Result<Graph> {
        if features.rows() != self.num_nodes() {
            return Err(Error::shape("with_features", self.features.shape(), features.shape()));
        }
        if !features.is_finite() {
            return Err(Error::InvalidGraph("features contain non-finite values".into()));
        }
        Ok(Graph {
            features,
            edges: self.edges.clone(),
            sensitive: self.sensitive.clone(),
            targets: self.targets.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReweightConfig {
    pub gamma: f64,
    pub weight_floor: f64,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        ReweightConfig {
            gamma: 1.0,
            weight_floor: 1e-3,
        }
    }
}

impl ReweightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "weight_floor must be in (0, 1], got {}",
                self.weight_floor
            )));
        }
        Ok(())
    }
}

/// Cosine similarity clamped to `[floor, 1]`. Returns `None` when either
/// vector has zero norm.
fn clamped_cosine(a: &[f64], b: &[f64], floor: f64) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = math::sqrt(a.iter().map(|x| x * x).sum());
    let nb = math::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(floor, 1.0))
}

/// Raw fairness-adjusted weight of an edge, in `[floor, 1]`. Zero-norm
/// inputs fall back to the floor similarity. The floor also bounds the
/// penalized product, so a cross-group edge keeps at least `floor` for any
/// `gamma`.
pub fn compute_edge_weight(x_i: &[f64], x_j: &[f64], s_i: u8, s_j: u8, cfg: &ReweightConfig) -> f64 {
    let sim = clamped_cosine(x_i, x_j, cfg.weight_floor).unwrap_or(cfg.weight_floor);
    if s_i != s_j {
        (sim * math::exp(-cfg.gamma)).max(cfg.weight_floor)
    } else {
        sim
    }
}

/// How edge weights are derived before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdjacencySpec {
    /// Cosine similarity with the cross-group penalty.
    Reweighted(ReweightConfig),
    /// Every edge has raw weight 1.
    Plain,
}

/// Symmetric-normalized adjacency with self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightedAdjacency {
    matrix: Arc<CsrMatrix>,
    raw_edge_weights: Vec<f64>,
    degenerate_pairs: usize,
}

impl ReweightedAdjacency {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn matrix(&self) -> &Arc<CsrMatrix> {
        &self.matrix
    }

    /// Raw weights, aligned with [`Graph::edges`].
    pub fn raw_edge_weights(&self) -> &[f64] {
        &self.raw_edge_weights
    }

    /// Number of edges whose endpoints had a zero-norm feature vector.
    pub fn degenerate_pairs(&self) -> usize {
        self.degenerate_pairs
    }

    /// `(i, j, w)` over all stored entries, both directions and self-loops.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.matrix.iter()
    }
}

/// Symmetric normalization of raw undirected edge weights plus a self-loop
/// of weight `self_loop` on every node.
pub fn normalize_adjacency(
    n: usize,
    edges: &[(usize, usize)],
    raw: &[f64],
    self_loop: f64,
) -> Result<CsrMatrix> {
    if edges.len() != raw.len() {
        return Err(Error::shape("normalize_adjacency", (edges.len(), 1), (raw.len(), 1)));
    }
    let mut degree = alloc::vec![self_loop; n];
    for (&(i, j), &w) in edges.iter().zip(raw) {
        degree[i] += w;
        degree[j] += w;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| 1.0 / math::sqrt(d)).collect();
    let mut triplets = Vec::with_capacity(2 * edges.len() + n);
    for (i, &s) in inv_sqrt.iter().enumerate() {
        triplets.push((i, i, self_loop * s * s));
    }
    for (&(i, j), &w) in edges.iter().zip(raw) {
        let v = w * inv_sqrt[i] * inv_sqrt[j];
        triplets.push((i, j, v));
        triplets.push((j, i, v));
    }
    CsrMatrix::from_triplets(n, &triplets)
}

/// Fairness-reweighted adjacency for `g`.
pub fn build_reweighted_adjacency(g: &Graph, cfg: &ReweightConfig) -> Result<ReweightedAdjacency> {
    cfg.validate()?;
    let x = g.features();
    let s = g.sensitive();
    let mut degenerate = 0;
    let raw: Vec<f64> = g
        .edges()
        .iter()
        .map(|&(i, j)| {
            if clamped_cosine(x.row_slice(i), x.row_slice(j), cfg.weight_floor).is_none() {
                degenerate += 1;
            }
            compute_edge_weight(x.row_slice(i), x.row_slice(j), s[i], s[j], cfg)
        })
        .collect();
    let matrix = normalize_adjacency(g.num_nodes(), g.edges(), &raw, 1.0)?;
    Ok(ReweightedAdjacency {
        matrix: Arc::new(matrix),
        raw_edge_weights: raw,
        degenerate_pairs: degenerate,
    })
}

/// Standard GCN adjacency: unit edge weights, unit self-loops.
pub fn build_plain_adjacency(g: &Graph) -> Result<ReweightedAdjacency> {
    let raw = alloc::vec![1.0; g.edges().len()];
    let matrix = normalize_adjacency(g.num_nodes(), g.edges(), &raw, 1.0)?;
    Ok(ReweightedAdjacency {
        matrix: Arc::new(matrix),
        raw_edge_weights: raw,
        degenerate_pairs: 0,
    })
}

pub fn build_adjacency(g: &Graph, spec: &AdjacencySpec) -> Result<ReweightedAdjacency> {
    match spec {
        AdjacencySpec::Reweighted(cfg) => build_reweighted_adjacency(g, cfg),
        AdjacencySpec::Plain => build_plain_adjacency(g),
    }
}

/// Per-column z-score fitted on a subset of rows. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &Tensor, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyMask);
        }
        let d = features.cols();
        let mut mean = alloc::vec![0.0; d];
        let mut std = alloc::vec![0.0; d];
        let mut column = Vec::with_capacity(rows.len());
        for c in 0..d {
            column.clear();
            for &r in rows {
                if r >= features.rows() {
                    return Err(Error::IndexOutOfBounds {
                        index: r,
                        len: features.rows(),
                    });
                }
                column.push(features.get(r, c));
            }
            mean[c] = math::mean(&column);
            std[c] = math::sqrt(math::variance(&column));
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        if features.cols() != self.mean.len() {
            return Err(Error::shape("standardize", features.shape(), (1, self.mean.len())));
        }
        let mut out = features.clone();
        let d = features.cols();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let c = k % d;
            *v = if self.std[c] > 0.0 {
                (*v - self.mean[c]) / self.std[c]
            } else {
                0.0
            };
        }
        Ok(out)
    }
}
