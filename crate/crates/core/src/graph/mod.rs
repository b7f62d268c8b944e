//! Transaction graph construction.
//!
//! Raw records are cleaned in three passes (duplicate ids, dangling edges,
//! label normalization) and then compiled into an immutable
//! [`TransactionGraph`] whose every edge respects strict time ordering.

mod io;
mod sample;
mod stats;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor2;

pub use io::{read_classes, read_edges, read_features, write_bundle, IngestConfig, RawInputs};
pub use sample::{stratified_sample, DEFAULT_SAMPLE_FRACTION};
pub use stats::{fit_power_law, graph_stats, hurwitz_zeta, GraphStats, DEFAULT_DEGREE_MIN};

pub const DEFAULT_FEATURE_DIM: usize = 166;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("transaction {id} carries conflicting labels {first:?} and {second:?}")]
    ConflictingLabel {
        id: String,
        first: Label,
        second: Label,
    },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("edge {src} -> {dst} violates time ordering ({src_step} >= {dst_step})")]
    NonCausalEdge {
        src: usize,
        dst: usize,
        src_step: u32,
        dst_step: u32,
    },
    #[error("edge endpoint {0} out of range")]
    EdgeOutOfRange(usize),
    #[error("sampling fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("graph statistics need at least two nodes")]
    TooFewNodes,
    #[error("all node degrees are equal; power-law exponent undefined")]
    DegenerateDegrees,
    #[error(transparent)]
    Random(#[from] crate::quantum::QuantumError),
}

impl GraphError {
    /// True for errors caused by data integrity rather than file syntax.
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            GraphError::ConflictingLabel { .. }
                | GraphError::EmptyGraph
                | GraphError::NonCausalEdge { .. }
                | GraphError::EdgeOutOfRange(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Licit,
    Illicit,
    Unknown,
}

impl Label {
    /// Binary class index used for training: licit 0, illicit 1.
    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::Licit => Some(0),
            Label::Illicit => Some(1),
            Label::Unknown => None,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Licit => "licit",
            Label::Illicit => "illicit",
            Label::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub external_id: String,
    pub time_step: u32,
    pub raw_features: Vec<f64>,
}

impl TransactionRecord {
    pub fn new(
        external_id: impl Into<String>,
        time_step: u32,
        raw_features: Vec<f64>,
    ) -> Result<Self, GraphError> {
        let external_id = external_id.into();
        if external_id.is_empty() {
            return Err(GraphError::InvalidRecord("empty transaction id".into()));
        }
        if time_step == 0 {
            return Err(GraphError::InvalidRecord(format!(
                "transaction {external_id} has time step 0; steps start at 1"
            )));
        }
        Ok(Self {
            external_id,
            time_step,
            raw_features,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawEdge {
    pub src: String,
    pub dst: String,
}

impl RawEdge {
    /// Self-payments are rejected.
    pub fn new(src: impl Into<String>, dst: impl Into<String>) -> Result<Self, GraphError> {
        let (src, dst) = (src.into(), dst.into());
        if src == dst {
            return Err(GraphError::InvalidRecord(format!("self-loop on {src}")));
        }
        Ok(Self { src, dst })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelHistogram {
    pub licit: usize,
    pub illicit: usize,
    pub unknown: usize,
}

impl LabelHistogram {
    pub fn from_labels(labels: &[Label]) -> Self {
        let mut h = Self::default();
        for l in labels {
            match l {
                Label::Licit => h.licit += 1,
                Label::Illicit => h.illicit += 1,
                Label::Unknown => h.unknown += 1,
            }
        }
        h
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub duplicates_removed: usize,
    pub dangling_edges_removed: usize,
    pub causality_edges_removed: usize,
    pub label_histogram: LabelHistogram,
    /// Repeated `(src, dst)` pairs collapsed into one edge.
    pub duplicate_edges_removed: usize,
    pub nodes_retained: usize,
    pub edges_retained: usize,
}

/// Drops every record whose id was already seen, keeping input order.
pub fn dedupe_nodes(records: Vec<TransactionRecord>) -> (Vec<TransactionRecord>, usize) {
    let mut seen = HashSet::with_capacity(records.len());
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| seen.insert(r.external_id.clone()))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Keeps only edges whose endpoints are both in `valid_ids`.
pub fn validate_edges(edges: Vec<RawEdge>, valid_ids: &HashSet<String>) -> (Vec<RawEdge>, usize) {
    let before = edges.len();
    let kept: Vec<_> = edges
        .into_iter()
        .filter(|e| valid_ids.contains(&e.src) && valid_ids.contains(&e.dst))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Raw label strings that map to each class; anything else is unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub illicit: Vec<String>,
    pub licit: Vec<String>,
}

impl Default for LabelMapping {
    fn default() -> Self {
        Self {
            illicit: vec!["1".into()],
            licit: vec!["2".into()],
        }
    }
}

impl LabelMapping {
    pub fn map(&self, raw: &str) -> Label {
        let raw = raw.trim();
        if self.illicit.iter().any(|s| s == raw) {
            Label::Illicit
        } else if self.licit.iter().any(|s| s == raw) {
            Label::Licit
        } else {
            Label::Unknown
        }
    }
}

/// Maps raw `(id, label)` pairs onto the three-class scheme.
///
/// An id listed more than once keeps its known label; two different known
/// labels for one id is an error. Ids never listed resolve to unknown via
/// [`label_of`].
pub fn normalize_labels<'a>(
    raw_labels: impl IntoIterator<Item = (&'a str, &'a str)>,
    mapping: &LabelMapping,
) -> Result<HashMap<String, Label>, GraphError> {
    let mut out: HashMap<String, Label> = HashMap::new();
    for (id, raw) in raw_labels {
        let label = mapping.map(raw);
        match out.get_mut(id) {
            None => {
                out.insert(id.to_string(), label);
            }
            Some(existing) => {
                if *existing == Label::Unknown {
                    *existing = label;
                } else if label != Label::Unknown && label != *existing {
                    return Err(GraphError::ConflictingLabel {
                        id: id.to_string(),
                        first: *existing,
                        second: label,
                    });
                }
            }
        }
    }
    Ok(out)
}

pub fn label_of(labels: &HashMap<String, Label>, id: &str) -> Label {
    labels.get(id).copied().unwrap_or(Label::Unknown)
}

/// Temporal directed transaction graph with contiguous node indices.
#[derive(Debug, Clone)]
pub struct TransactionGraph {
    out_ptr: Vec<usize>,
    out_idx: Vec<usize>,
    in_ptr: Vec<usize>,
    in_idx: Vec<usize>,
    nbr_ptr: Vec<usize>,
    nbr_idx: Vec<usize>,
    features: Tensor2,
    labels: Vec<Label>,
    time_steps: Vec<u32>,
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl TransactionGraph {
    /// Assembles a graph from already-indexed parts, rejecting any edge that
    /// breaks strict time ordering. Duplicate edges are collapsed.
    pub fn from_parts(
        ids: Vec<String>,
        time_steps: Vec<u32>,
        labels: Vec<Label>,
        features: Tensor2,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let n = ids.len();
        if n == 0 {
            return Err(GraphError::EmptyGraph);
        }
        if time_steps.len() != n || labels.len() != n || features.rows() != n {
            return Err(GraphError::InvalidRecord(format!(
                "inconsistent part lengths: ids {n}, steps {}, labels {}, feature rows {}",
                time_steps.len(),
                labels.len(),
                features.rows()
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(GraphError::InvalidRecord(format!("duplicate id {id}")));
            }
        }
        let mut out_lists = vec![Vec::new(); n];
        let mut in_lists = vec![Vec::new(); n];
        for &(s, d) in edges {
            if s >= n || d >= n {
                return Err(GraphError::EdgeOutOfRange(s.max(d)));
            }
            if time_steps[s] >= time_steps[d] {
                return Err(GraphError::NonCausalEdge {
                    src: s,
                    dst: d,
                    src_step: time_steps[s],
                    dst_step: time_steps[d],
                });
            }
            out_lists[s].push(d);
            in_lists[d].push(s);
        }
        let (out_ptr, out_idx) = compress(&mut out_lists);
        let (in_ptr, in_idx) = compress(&mut in_lists);
        // Causality makes in- and out-neighbours disjoint.
        let mut nbr_lists: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                let mut l = out_idx[out_ptr[v]..out_ptr[v + 1]].to_vec();
                l.extend_from_slice(&in_idx[in_ptr[v]..in_ptr[v + 1]]);
                l
            })
            .collect();
        let (nbr_ptr, nbr_idx) = compress(&mut nbr_lists);
        Ok(Self {
            out_ptr,
            out_idx,
            in_ptr,
            in_idx,
            nbr_ptr,
            nbr_idx,
            features,
            labels,
            time_steps,
            ids,
            index,
        })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_idx.len()
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_idx[self.out_ptr[v]..self.out_ptr[v + 1]]
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_idx[self.in_ptr[v]..self.in_ptr[v + 1]]
    }

    /// Undirected one-hop neighbourhood (in- and out-neighbours), sorted.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.nbr_idx[self.nbr_ptr[v]..self.nbr_ptr[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.nbr_ptr[v + 1] - self.nbr_ptr[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |s| self.out_neighbors(s).iter().map(move |&d| (s, d)))
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn time_steps(&self) -> &[u32] {
        &self.time_steps
    }

    pub fn max_time_step(&self) -> u32 {
        self.time_steps.iter().copied().max().unwrap_or(0)
    }

    pub fn external_id(&self, v: usize) -> &str {
        &self.ids[v]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Binary targets for labeled nodes, `None` for unknown.
    pub fn class_targets(&self) -> Vec<Option<usize>> {
        self.labels.iter().map(|l| l.class_index()).collect()
    }

    /// Copy of this graph with different labels (used for label hiding).
    pub fn with_labels(&self, labels: Vec<Label>) -> Self {
        assert_eq!(labels.len(), self.node_count());
        Self {
            labels,
            ..self.clone()
        }
    }
}

fn compress(lists: &mut [Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = Vec::with_capacity(lists.len() + 1);
    let mut idx = Vec::new();
    ptr.push(0);
    for l in lists.iter_mut() {
        l.sort_unstable();
        l.dedup();
        idx.extend_from_slice(l);
        ptr.push(idx.len());
    }
    (ptr, idx)
}

/// Compiles cleaned records and edges into a graph.
///
/// Indices follow record order. Edges with `t_src >= t_dst` are dropped and
/// counted; repeated pairs are collapsed. The returned report covers only what
/// this step removes; [`clean_and_build`] fills in the earlier passes.
pub fn build_graph(
    records: &[TransactionRecord],
    edges: &[RawEdge],
    labels: &HashMap<String, Label>,
) -> Result<(TransactionGraph, IntegrityReport), GraphError> {
    if records.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let dim = records[0].raw_features.len();
    let mut index = HashMap::with_capacity(records.len());
    let mut data = Vec::with_capacity(records.len() * dim);
    for (i, r) in records.iter().enumerate() {
        if r.raw_features.len() != dim {
            return Err(GraphError::InvalidRecord(format!(
                "transaction {} has {} features, expected {dim}",
                r.external_id,
                r.raw_features.len()
            )));
        }
        if index.insert(r.external_id.as_str(), i).is_some() {
            return Err(GraphError::InvalidRecord(format!(
                "duplicate id {} reached build_graph; dedupe first",
                r.external_id
            )));
        }
        data.extend_from_slice(&r.raw_features);
    }
    let mut report = IntegrityReport::default();
    let mut seen = HashSet::with_capacity(edges.len());
    let mut kept = Vec::with_capacity(edges.len());
    for e in edges {
        let (Some(&s), Some(&d)) = (index.get(e.src.as_str()), index.get(e.dst.as_str())) else {
            report.dangling_edges_removed += 1;
            continue;
        };
        if records[s].time_step >= records[d].time_step {
            report.causality_edges_removed += 1;
        } else if !seen.insert((s, d)) {
            report.duplicate_edges_removed += 1;
        } else {
            kept.push((s, d));
        }
    }
    let ids: Vec<String> = records.iter().map(|r| r.external_id.clone()).collect();
    let node_labels: Vec<Label> = ids.iter().map(|id| label_of(labels, id)).collect();
    let steps = records.iter().map(|r| r.time_step).collect();
    report.label_histogram = LabelHistogram::from_labels(&node_labels);
    report.nodes_retained = records.len();
    report.edges_retained = kept.len();
    let graph = TransactionGraph::from_parts(
        ids,
        steps,
        node_labels,
        Tensor2::from_vec(records.len(), dim, data),
        &kept,
    )?;
    Ok((graph, report))
}

/// Runs the full cleaning sequence: dedupe, edge validation, label
/// normalization, graph build.
pub fn clean_and_build(
    records: Vec<TransactionRecord>,
    edges: Vec<RawEdge>,
    self_loops: usize,
    raw_labels: &[(String, String)],
    mapping: &LabelMapping,
) -> Result<(TransactionGraph, IntegrityReport), GraphError> {
    let (records, duplicates) = dedupe_nodes(records);
    let valid: HashSet<String> = records.iter().map(|r| r.external_id.clone()).collect();
    let (edges, dangling) = validate_edges(edges, &valid);
    let labels = normalize_labels(
        raw_labels.iter().map(|(a, b)| (a.as_str(), b.as_str())),
        mapping,
    )?;
    let (graph, mut report) = build_graph(&records, &edges, &labels)?;
    report.duplicates_removed = duplicates;
    report.dangling_edges_removed += dangling;
    report.causality_edges_removed += self_loops;
    Ok((graph, report))
}
