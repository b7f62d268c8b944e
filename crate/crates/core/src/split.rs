//! Train/validation/test partitions.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Label, TransactionGraph};
use crate::quantum::{QuantumError, RandomSource};
use crate::quota::largest_remainder;

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];
pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_BETA: f64 = 0.9;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("split ratios {0:?} must be positive and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("class {class} has {count} labeled nodes, fewer than {parts} parts")]
    ClassTooSmall {
        class: &'static str,
        count: usize,
        parts: usize,
    },
    #[error("need 0 < alpha < beta < 1, got alpha={alpha} beta={beta}")]
    InvalidWindow { alpha: f64, beta: f64 },
    #[error("chronological split needs at least 3 distinct time steps, found {0}")]
    TooFewSteps(usize),
    #[error("{0} window has no labeled nodes")]
    DegenerateWindow(&'static str),
    #[error("split covers {found} nodes, graph has {expected}")]
    NodeCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Random(#[from] QuantumError),
    #[error("{path}: {message}")]
    Persist { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Val,
    Test,
    Excluded,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::Train, Part::Val, Part::Test, Part::Excluded];

    pub fn as_str(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
            Part::Excluded => "excluded",
        }
    }

    pub fn parse(s: &str) -> Option<Part> {
        Part::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Stratified,
    Chronological,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::Stratified => "stratified",
            SplitMode::Chronological => "chronological",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: Vec<Part>,
    pub mode: SplitMode,
    pub ratios: [f64; 3],
    pub alpha_beta: Option<(f64, f64)>,
}

impl SplitAssignment {
    pub fn indices(&self, part: Part) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == part)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn mask(&self, part: Part) -> Vec<bool> {
        self.assignment.iter().map(|&p| p == part).collect()
    }

    pub fn count(&self, part: Part) -> usize {
        self.assignment.iter().filter(|&&p| p == part).count()
    }

    /// Writes `node_index,part` rows with a header.
    pub fn write_csv(&self, path: &Path) -> Result<(), SplitError> {
        let err = |message: String| SplitError::Persist {
            path: path.display().to_string(),
            message,
        };
        let file = File::create(path).map_err(|e| err(e.to_string()))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["node_index", "part"])
            .map_err(|e| err(e.to_string()))?;
        for (i, p) in self.assignment.iter().enumerate() {
            w.write_record([i.to_string().as_str(), p.as_str()])
                .map_err(|e| err(e.to_string()))?;
        }
        w.flush().map_err(|e| err(e.to_string()))
    }

    /// Reads the per-node parts written by [`SplitAssignment::write_csv`].
    pub fn read_parts(path: &Path) -> Result<Vec<Part>, SplitError> {
        let err = |message: String| SplitError::Persist {
            path: path.display().to_string(),
            message,
        };
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut parts = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| err(e.to_string()))?;
            let idx: usize = row
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(format!("row {}: bad node index", i + 2)))?;
            if idx != i {
                return Err(err(format!("row {}: expected node {i}, found {idx}", i + 2)));
            }
            let part = row
                .get(1)
                .and_then(Part::parse)
                .ok_or_else(|| err(format!("row {}: bad part", i + 2)))?;
            parts.push(part);
        }
        Ok(parts)
    }
}

fn check_ratios(ratios: [f64; 3]) -> Result<(), SplitError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(SplitError::InvalidRatios(ratios));
    }
    Ok(())
}

/// Class-stratified random split of the labeled nodes. Each class is shuffled
/// with `rng` and cut by largest-remainder quotas.
pub fn stratified_split(
    graph: &TransactionGraph,
    ratios: [f64; 3],
    rng: &mut RandomSource,
) -> Result<SplitAssignment, SplitError> {
    check_ratios(ratios)?;
    let labels = graph.labels();
    let mut assignment = vec![Part::Excluded; labels.len()];
    for class in [Label::Licit, Label::Illicit] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 3 {
            return Err(SplitError::ClassTooSmall {
                class: class.as_str(),
                count: members.len(),
                parts: 3,
            });
        }
        rng.shuffle(&mut members)?;
        let quotas = largest_remainder(members.len(), &ratios);
        let mut rest = members.as_slice();
        for (part, q) in [Part::Train, Part::Val, Part::Test].into_iter().zip(quotas) {
            let (head, tail) = rest.split_at(q);
            for &i in head {
                assignment[i] = part;
            }
            rest = tail;
        }
    }
    Ok(SplitAssignment {
        assignment,
        mode: SplitMode::Stratified,
        ratios,
        alpha_beta: None,
    })
}

/// Last time step of the train and validation windows for horizon `t_max`.
pub fn window_bounds(t_max: u32, alpha: f64, beta: f64) -> (u32, u32) {
    let cut = |r: f64| (r * t_max as f64 + 1e-9).floor() as u32;
    (cut(alpha), cut(beta))
}

/// Time-ordered split: steps `1..=⌊αT⌋` train, up to `⌊βT⌋` validation, the
/// rest test. Unknown-label nodes are excluded.
pub fn chronological_split(
    graph: &TransactionGraph,
    alpha: f64,
    beta: f64,
) -> Result<SplitAssignment, SplitError> {
    if !(0.0 < alpha && alpha < beta && beta < 1.0) {
        return Err(SplitError::InvalidWindow { alpha, beta });
    }
    let steps = graph.time_steps();
    let mut distinct = steps.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(SplitError::TooFewSteps(distinct.len()));
    }
    let (train_end, val_end) = window_bounds(graph.max_time_step(), alpha, beta);
    let assignment: Vec<Part> = steps
        .iter()
        .zip(graph.labels())
        .map(|(&t, l)| {
            if !l.is_labeled() {
                Part::Excluded
            } else if t <= train_end {
                Part::Train
            } else if t <= val_end {
                Part::Val
            } else {
                Part::Test
            }
        })
        .collect();
    for part in [Part::Train, Part::Val, Part::Test] {
        if !assignment.contains(&part) {
            return Err(SplitError::DegenerateWindow(part.as_str()));
        }
    }
    Ok(SplitAssignment {
        assignment,
        mode: SplitMode::Chronological,
        ratios: [alpha, beta - alpha, 1.0 - beta],
        alpha_beta: Some((alpha, beta)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_support::random_graph;
    use crate::tensor::Tensor2;
    use proptest::prelude::*;

    fn labeled(licit: usize, illicit: usize, unknown: usize) -> TransactionGraph {
        let n = licit + illicit + unknown;
        let mut labels = vec![Label::Licit; licit];
        labels.extend(vec![Label::Illicit; illicit]);
        labels.extend(vec![Label::Unknown; unknown]);
        TransactionGraph::from_parts(
            (0..n).map(|i| i.to_string()).collect(),
            (0..n).map(|i| 1 + (i % 7) as u32).collect(),
            labels,
            Tensor2::zeros(n, 1),
            &[],
        )
        .unwrap()
    }

    fn class_count(s: &SplitAssignment, g: &TransactionGraph, part: Part, class: Label) -> usize {
        s.indices(part)
            .into_iter()
            .filter(|&i| g.labels()[i] == class)
            .count()
    }

    #[test]
    fn quota_example() {
        let g = labeled(90, 10, 0);
        let s = stratified_split(&g, DEFAULT_RATIOS, &mut RandomSource::seeded(1)).unwrap();
        let counts = |p| {
            (
                class_count(&s, &g, p, Label::Licit),
                class_count(&s, &g, p, Label::Illicit),
            )
        };
        assert_eq!(counts(Part::Train), (72, 8));
        assert_eq!(counts(Part::Val), (9, 1));
        assert_eq!(counts(Part::Test), (9, 1));
    }

    #[test]
    fn rejects_bad_ratios_and_small_classes() {
        let g = labeled(90, 10, 0);
        let mut rng = RandomSource::seeded(1);
        assert!(matches!(
            stratified_split(&g, [1.0, 0.0, 0.0], &mut rng),
            Err(SplitError::InvalidRatios(_))
        ));
        assert!(matches!(
            stratified_split(&g, [0.5, 0.3, 0.3], &mut rng),
            Err(SplitError::InvalidRatios(_))
        ));
        assert!(matches!(
            stratified_split(&labeled(50, 2, 3), DEFAULT_RATIOS, &mut rng),
            Err(SplitError::ClassTooSmall { count: 2, .. })
        ));
    }

    #[test]
    fn unknown_nodes_excluded_and_seed_deterministic() {
        let g = random_graph(200, 10, 0.02, 1, 3);
        let a = stratified_split(&g, DEFAULT_RATIOS, &mut RandomSource::seeded(9)).unwrap();
        let b = stratified_split(&g, DEFAULT_RATIOS, &mut RandomSource::seeded(9)).unwrap();
        let c = stratified_split(&g, DEFAULT_RATIOS, &mut RandomSource::seeded(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (p, l) in a.assignment.iter().zip(g.labels()) {
            assert_eq!(*p == Part::Excluded, !l.is_labeled());
        }
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(window_bounds(10, 0.8, 0.9), (8, 9));
        assert_eq!(window_bounds(49, 0.8, 0.9), (39, 44));
        assert_eq!(window_bounds(100, 0.29, 0.57), (29, 57));
    }

    #[test]
    fn chronological_parts_follow_time() {
        let g = random_graph(300, 49, 0.01, 1, 4);
        let s = chronological_split(&g, DEFAULT_ALPHA, DEFAULT_BETA).unwrap();
        let steps = |p| s.indices(p).into_iter().map(|i| g.time_steps()[i]).collect::<Vec<_>>();
        let (train, val, test) = (steps(Part::Train), steps(Part::Val), steps(Part::Test));
        assert_eq!(*train.iter().max().unwrap(), 39);
        assert_eq!((*val.iter().min().unwrap(), *val.iter().max().unwrap()), (40, 44));
        assert_eq!(*test.iter().min().unwrap(), 45);
        assert_eq!(s.alpha_beta, Some((0.8, 0.9)));
        let sum: f64 = s.ratios.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chronological_rejects_degenerate_windows() {
        let g = random_graph(30, 2, 0.0, 1, 1);
        assert!(matches!(
            chronological_split(&g, 0.8, 0.9),
            Err(SplitError::TooFewSteps(2))
        ));
        let g = random_graph(30, 10, 0.0, 1, 1);
        assert!(matches!(
            chronological_split(&g, 0.9, 0.8),
            Err(SplitError::InvalidWindow { .. })
        ));
        // T=10, beta=0.95 puts step 10 in validation; test window is empty.
        assert!(matches!(
            chronological_split(&g, 0.5, 0.95),
            Err(SplitError::DegenerateWindow("test"))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let g = random_graph(40, 6, 0.05, 1, 2);
        let s = stratified_split(&g, DEFAULT_RATIOS, &mut RandomSource::seeded(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.csv");
        s.write_csv(&p).unwrap();
        assert_eq!(SplitAssignment::read_parts(&p).unwrap(), s.assignment);
    }

    proptest! {
        #[test]
        fn stratification_bound(licit in 3usize..400, illicit in 3usize..60, seed in 0u64..1000,
                                r_val in 0.05f64..0.3, r_test in 0.05f64..0.3) {
            let g = labeled(licit, illicit, 5);
            let ratios = [1.0 - r_val - r_test, r_val, r_test];
            let s = stratified_split(&g, ratios, &mut RandomSource::seeded(seed)).unwrap();
            for class in [Label::Licit, Label::Illicit] {
                let n_c = if class == Label::Licit { licit } else { illicit } as f64;
                for (k, part) in [Part::Train, Part::Val, Part::Test].into_iter().enumerate() {
                    let got = class_count(&s, &g, part, class) as f64;
                    prop_assert!((got - ratios[k] * n_c).abs() < 1.0);
                }
            }
        }
    }
}
