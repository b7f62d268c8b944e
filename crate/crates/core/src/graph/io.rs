//! CSV ingestion in the Elliptic layout.
//!
//! * features: no header, `external_id, time_step, f_1 .. f_d`
//! * edges: no header (configurable), `src_id, dst_id`
//! * classes: header row, `external_id, raw_label`

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    clean_and_build, GraphError, IntegrityReport, Label, LabelMapping, RawEdge,
    TransactionGraph, TransactionRecord, DEFAULT_FEATURE_DIM,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub features_path: PathBuf,
    pub edges_path: PathBuf,
    pub classes_path: PathBuf,
    /// Expected feature columns after id and time step. `None` infers the
    /// width from the first row.
    pub feature_dim: Option<usize>,
    pub edges_header: bool,
    pub label_mapping: LabelMapping,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            features_path: PathBuf::from("features.csv"),
            edges_path: PathBuf::from("edges.csv"),
            classes_path: PathBuf::from("classes.csv"),
            feature_dim: Some(DEFAULT_FEATURE_DIM),
            edges_header: false,
            label_mapping: LabelMapping::default(),
        }
    }
}

impl IngestConfig {
    /// Config for a bundle directory written by [`write_bundle`].
    pub fn for_bundle(dir: &Path, feature_dim: Option<usize>) -> Self {
        Self {
            features_path: dir.join("features.csv"),
            edges_path: dir.join("edges.csv"),
            classes_path: dir.join("classes.csv"),
            feature_dim,
            ..Self::default()
        }
    }

    pub fn read(&self) -> Result<RawInputs, GraphError> {
        let records = read_features(&self.features_path, self.feature_dim)?;
        let (edges, self_loops) = read_edges(&self.edges_path, self.edges_header)?;
        let raw_labels = read_classes(&self.classes_path)?;
        Ok(RawInputs {
            records,
            edges,
            self_loops,
            raw_labels,
        })
    }

    pub fn ingest(&self) -> Result<(TransactionGraph, IntegrityReport), GraphError> {
        let raw = self.read()?;
        clean_and_build(
            raw.records,
            raw.edges,
            raw.self_loops,
            &raw.raw_labels,
            &self.label_mapping,
        )
    }
}

#[derive(Debug, Clone)]
pub struct RawInputs {
    pub records: Vec<TransactionRecord>,
    pub edges: Vec<RawEdge>,
    /// Self-payment rows rejected while reading the edge file.
    pub self_loops: usize,
    pub raw_labels: Vec<(String, String)>,
}

fn open(path: &Path) -> Result<File, GraphError> {
    File::open(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn reader(path: &Path, has_headers: bool) -> Result<csv::Reader<File>, GraphError> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Format {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> GraphError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    format_err(path, line, e.to_string())
}

pub fn read_features(
    path: &Path,
    feature_dim: Option<usize>,
) -> Result<Vec<TransactionRecord>, GraphError> {
    let mut rdr = reader(path, false)?;
    let mut expected = feature_dim;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = i + 1;
        let width = row.len().saturating_sub(2);
        if row.len() < 2 {
            return Err(format_err(path, line, "expected at least id and time step"));
        }
        match expected {
            Some(d) if d != width => {
                return Err(format_err(
                    path,
                    line,
                    format!("expected {d} feature columns, found {width}"),
                ))
            }
            None => expected = Some(width),
            _ => {}
        }
        let step: u32 = row[1]
            .parse()
            .map_err(|_| format_err(path, line, format!("bad time step {:?}", &row[1])))?;
        let mut feats = Vec::with_capacity(width);
        for field in row.iter().skip(2) {
            feats.push(
                field
                    .parse::<f64>()
                    .map_err(|_| format_err(path, line, format!("bad feature value {field:?}")))?,
            );
        }
        let rec = TransactionRecord::new(&row[0], step, feats)
            .map_err(|e| format_err(path, line, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads the edge list. Self-payments are not errors; they are counted and
/// returned separately.
pub fn read_edges(path: &Path, has_header: bool) -> Result<(Vec<RawEdge>, usize), GraphError> {
    let mut rdr = reader(path, has_header)?;
    let mut edges = Vec::new();
    let mut self_loops = 0;
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.len() != 2 {
            return Err(format_err(
                path,
                i + 1,
                format!("expected 2 columns, found {}", row.len()),
            ));
        }
        match RawEdge::new(&row[0], &row[1]) {
            Ok(e) => edges.push(e),
            Err(_) => self_loops += 1,
        }
    }
    Ok((edges, self_loops))
}

pub fn read_classes(path: &Path) -> Result<Vec<(String, String)>, GraphError> {
    let mut rdr = reader(path, true)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.len() != 2 {
            return Err(format_err(
                path,
                i + 2,
                format!("expected 2 columns, found {}", row.len()),
            ));
        }
        out.push((row[0].to_string(), row[1].to_string()));
    }
    Ok(out)
}

fn create(path: &Path) -> Result<File, GraphError> {
    File::create(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_err(path: &Path, e: csv::Error) -> GraphError {
    GraphError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

/// Writes a graph as an Elliptic-layout triple that [`IngestConfig::ingest`]
/// reads back into the same graph.
pub fn write_bundle(
    graph: &TransactionGraph,
    dir: &Path,
    mapping: &LabelMapping,
) -> Result<(), GraphError> {
    fs::create_dir_all(dir).map_err(|source| GraphError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join("features.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(&path)?);
    let mut fields = Vec::with_capacity(graph.feature_dim() + 2);
    for v in 0..graph.node_count() {
        fields.clear();
        fields.push(graph.external_id(v).to_string());
        fields.push(graph.time_steps()[v].to_string());
        fields.extend(graph.features().row(v).iter().map(|x| x.to_string()));
        w.write_record(&fields).map_err(|e| write_err(&path, e))?;
    }
    w.flush().map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let path = dir.join("edges.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(&path)?);
    for (s, d) in graph.edges() {
        w.write_record([graph.external_id(s), graph.external_id(d)])
            .map_err(|e| write_err(&path, e))?;
    }
    w.flush().map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let path = dir.join("classes.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["txId", "class"])
        .map_err(|e| write_err(&path, e))?;
    let token = |l: Label| -> String {
        match l {
            Label::Illicit => mapping.illicit.first().cloned().unwrap_or_else(|| "1".into()),
            Label::Licit => mapping.licit.first().cloned().unwrap_or_else(|| "2".into()),
            Label::Unknown => "unknown".into(),
        }
    };
    for v in 0..graph.node_count() {
        w.write_record([graph.external_id(v).to_string(), token(graph.labels()[v])])
            .map_err(|e| write_err(&path, e))?;
    }
    w.flush().map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_support::random_graph;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn reads_elliptic_triple() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = IngestConfig {
            features_path: write(dir.path(), "f.csv", "a,1,0.5,1\nb,2,1.5,2\na,3,9,9\n"),
            edges_path: write(dir.path(), "e.csv", "a,b\nb,a\nb,b\na,zz\n"),
            classes_path: write(dir.path(), "c.csv", "txId,class\na,1\nb,2\n"),
            feature_dim: Some(2),
            ..IngestConfig::default()
        };
        let (g, rep) = cfg.ingest().unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(rep.duplicates_removed, 1);
        assert_eq!(rep.dangling_edges_removed, 1);
        assert_eq!(rep.causality_edges_removed, 2);
        assert_eq!(g.labels(), &[Label::Illicit, Label::Licit]);
    }

    #[test]
    fn wrong_column_count_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f.csv", "a,1,0.5,1\nb,2,1.5\n");
        let err = read_features(&p, None).unwrap_err();
        assert!(matches!(err, GraphError::Format { line: 2, .. }), "{err}");
        let err = read_features(&p, Some(166)).unwrap_err();
        assert!(matches!(err, GraphError::Format { line: 1, .. }));
        assert!(!err.is_integrity());
    }

    #[test]
    fn bad_numbers_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f.csv", "a,x,0.5\n");
        assert!(matches!(read_features(&p, None), Err(GraphError::Format { .. })));
        let p = write(dir.path(), "f2.csv", "a,0,0.5\n");
        assert!(matches!(read_features(&p, None), Err(GraphError::Format { .. })));
    }

    #[test]
    fn bundle_round_trips() {
        let g = random_graph(40, 6, 0.1, 3, 8);
        let dir = tempfile::tempdir().unwrap();
        let mapping = LabelMapping::default();
        write_bundle(&g, dir.path(), &mapping).unwrap();
        let (back, rep) = IngestConfig::for_bundle(dir.path(), Some(3)).ingest().unwrap();
        assert_eq!(rep.duplicates_removed + rep.dangling_edges_removed, 0);
        assert_eq!(back.ids(), g.ids());
        assert_eq!(back.labels(), g.labels());
        assert_eq!(back.time_steps(), g.time_steps());
        assert_eq!(back.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        assert_eq!(back.features(), g.features());
    }
}
