//! Per-node feature engineering.
//!
//! Transaction-level attributes are z-scored with statistics fitted on a
//! chosen row set (the training rows, so validation and test rows never leak
//! into the scaling). Derived columns add output dispersion and one-hop
//! neighbourhood aggregates of input and output value.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TransactionGraph;
use crate::tensor::Tensor2;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("normalization fit set is empty")]
    EmptyFitSet,
    #[error("fit row {0} out of range")]
    FitRowOutOfRange(usize),
    #[error("transaction has no outputs")]
    NoOutputs,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Raw,
    Zscored,
    Derived,
    Padding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Tensor2,
    pub column_stats: Vec<ColumnStats>,
    pub provenance: Vec<Provenance>,
}

impl FeatureMatrix {
    /// Wraps raw values; column stats are fitted over all rows.
    pub fn raw(values: Tensor2) -> Self {
        let all: Vec<usize> = (0..values.rows()).collect();
        let column_stats = fit_stats(&values, &all);
        let provenance = vec![Provenance::Raw; values.cols()];
        Self {
            values,
            column_stats,
            provenance,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

fn fit_stats(values: &Tensor2, rows: &[usize]) -> Vec<ColumnStats> {
    let n = rows.len() as f64;
    (0..values.cols())
        .map(|c| {
            if rows.is_empty() {
                return ColumnStats {
                    mean: 0.0,
                    std: 0.0,
                };
            }
            let mean = rows.iter().map(|&r| values.get(r, c)).sum::<f64>() / n;
            let var = rows
                .iter()
                .map(|&r| (values.get(r, c) - mean).powi(2))
                .sum::<f64>()
                / n;
            ColumnStats {
                mean,
                std: var.sqrt(),
            }
        })
        .collect()
}

/// Z-scores every column with population mean/std fitted on `fit_rows` only,
/// then applies the transform to all rows. Zero-variance columns map to 0.
pub fn zscore_normalize(
    matrix: &FeatureMatrix,
    fit_rows: &[usize],
) -> Result<FeatureMatrix, FeatureError> {
    if fit_rows.is_empty() {
        return Err(FeatureError::EmptyFitSet);
    }
    if let Some(&r) = fit_rows.iter().find(|&&r| r >= matrix.values.rows()) {
        return Err(FeatureError::FitRowOutOfRange(r));
    }
    let stats = fit_stats(&matrix.values, fit_rows);
    let mut values = matrix.values.clone();
    let cols = values.cols();
    for row in values.data_mut().chunks_mut(cols.max(1)) {
        for (x, s) in row.iter_mut().zip(&stats) {
            *x = if s.std > 0.0 {
                (*x - s.mean) / s.std
            } else {
                0.0
            };
        }
    }
    Ok(FeatureMatrix {
        values,
        column_stats: stats,
        provenance: vec![Provenance::Zscored; cols],
    })
}

/// Transaction-level attributes: input/output counts, fee, size in bytes and
/// the individual output values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxAttributes {
    pub v_in: u32,
    pub v_out: u32,
    pub fee: f64,
    pub size: f64,
    pub outputs: Vec<f64>,
}

impl TxAttributes {
    pub fn new(v_in: u32, fee: f64, size: f64, outputs: Vec<f64>) -> Self {
        Self {
            v_in,
            v_out: outputs.len() as u32,
            fee,
            size,
            outputs,
        }
    }

    /// Total value leaving the transaction.
    pub fn out_value(&self) -> f64 {
        self.outputs.iter().sum()
    }

    /// Total value entering the transaction: outputs plus fee.
    pub fn in_value(&self) -> f64 {
        self.out_value() + self.fee
    }
}

/// Population variance of output values.
pub fn output_dispersion(attrs: &TxAttributes) -> Result<f64, FeatureError> {
    if attrs.outputs.is_empty() {
        return Err(FeatureError::NoOutputs);
    }
    Ok(population_variance(&attrs.outputs))
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Aggregate over a node's neighbourhood. `empty` marks an isolated node whose
/// value was defined as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub value: f64,
    pub empty: bool,
}

/// Mean input value over the undirected one-hop neighbourhood.
pub fn neighborhood_avg_in(
    graph: &TransactionGraph,
    node: usize,
    in_values: &[f64],
) -> Aggregate {
    let nbrs = graph.neighbors(node);
    if nbrs.is_empty() {
        return Aggregate {
            value: 0.0,
            empty: true,
        };
    }
    Aggregate {
        value: nbrs.iter().map(|&u| in_values[u]).sum::<f64>() / nbrs.len() as f64,
        empty: false,
    }
}

/// Population variance of output value over the undirected one-hop
/// neighbourhood.
pub fn neighborhood_var_out(
    graph: &TransactionGraph,
    node: usize,
    out_values: &[f64],
) -> Aggregate {
    let nbrs = graph.neighbors(node);
    if nbrs.is_empty() {
        return Aggregate {
            value: 0.0,
            empty: true,
        };
    }
    let vals: Vec<f64> = nbrs.iter().map(|&u| out_values[u]).collect();
    Aggregate {
        value: population_variance(&vals),
        empty: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMode {
    /// Ingested matrix passes through unchanged.
    #[default]
    IngestOnly,
    /// z-scored transaction block plus derived block, no raw columns.
    DerivedOnly,
    /// z-scored transaction block, derived block, then raw ingested columns.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AssemblyConfig {
    pub mode: AssemblyMode,
    /// Pad with zero columns up to this width. Wider output is an error.
    pub target_dim: Option<usize>,
    /// Append a 0/1 column marking nodes with an empty neighbourhood.
    pub empty_neighborhood_flag: bool,
}

/// Columns produced per node by [`derived_block`].
pub const DERIVED_COLUMNS: usize = 3;

/// `[dispersion, avg_in, var_out]` per node, plus the empty-neighbourhood flags.
pub fn derived_block(graph: &TransactionGraph, attrs: &[TxAttributes]) -> (Tensor2, Vec<bool>) {
    let in_vals: Vec<f64> = attrs.iter().map(TxAttributes::in_value).collect();
    let out_vals: Vec<f64> = attrs.iter().map(TxAttributes::out_value).collect();
    let n = graph.node_count();
    let mut block = Tensor2::zeros(n, DERIVED_COLUMNS);
    let mut flags = Vec::with_capacity(n);
    for v in 0..n {
        let avg_in = neighborhood_avg_in(graph, v, &in_vals);
        let var_out = neighborhood_var_out(graph, v, &out_vals);
        block.set(v, 0, output_dispersion(&attrs[v]).unwrap_or(0.0));
        block.set(v, 1, avg_in.value);
        block.set(v, 2, var_out.value);
        flags.push(avg_in.empty);
    }
    (block, flags)
}

/// Builds the model input matrix from the ingested features and optional
/// transaction attributes. `fit_rows` selects the rows used to fit the
/// z-score statistics of the transaction block.
pub fn assemble_features(
    graph: &TransactionGraph,
    attrs: Option<&[TxAttributes]>,
    fit_rows: &[usize],
    config: &AssemblyConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let n = graph.node_count();
    let mut blocks: Vec<FeatureMatrix> = Vec::new();
    if config.mode != AssemblyMode::IngestOnly {
        let attrs = attrs.ok_or_else(|| {
            FeatureError::DimensionMismatch("derived features need transaction attributes".into())
        })?;
        if attrs.len() != n {
            return Err(FeatureError::DimensionMismatch(format!(
                "{} attribute rows for {n} nodes",
                attrs.len()
            )));
        }
        let tx = Tensor2::from_rows(
            &attrs
                .iter()
                .map(|a| vec![a.v_in as f64, a.v_out as f64, a.fee, a.size])
                .collect::<Vec<_>>(),
        );
        blocks.push(zscore_normalize(&FeatureMatrix::raw(tx), fit_rows)?);
        let (derived, flags) = derived_block(graph, attrs);
        let mut derived = FeatureMatrix::raw(derived);
        derived.provenance = vec![Provenance::Derived; DERIVED_COLUMNS];
        blocks.push(derived);
        if config.empty_neighborhood_flag {
            let col = Tensor2::from_vec(n, 1, flags.iter().map(|&f| f as u8 as f64).collect());
            let mut flag = FeatureMatrix::raw(col);
            flag.provenance = vec![Provenance::Derived];
            blocks.push(flag);
        }
    }
    if config.mode != AssemblyMode::DerivedOnly {
        blocks.push(FeatureMatrix::raw(graph.features().clone()));
    }
    let values = Tensor2::hconcat(&blocks.iter().map(|b| &b.values).collect::<Vec<_>>());
    let mut column_stats: Vec<ColumnStats> =
        blocks.iter().flat_map(|b| b.column_stats.clone()).collect();
    let mut provenance: Vec<Provenance> =
        blocks.iter().flat_map(|b| b.provenance.clone()).collect();
    let values = match config.target_dim {
        Some(d) if d < values.cols() => {
            return Err(FeatureError::DimensionMismatch(format!(
                "assembled {} columns, configured {d}",
                values.cols()
            )))
        }
        Some(d) if d > values.cols() => {
            let pad = d - values.cols();
            column_stats.extend(std::iter::repeat_n(
                ColumnStats {
                    mean: 0.0,
                    std: 0.0,
                },
                pad,
            ));
            provenance.extend(std::iter::repeat_n(Provenance::Padding, pad));
            Tensor2::hconcat(&[&values, &Tensor2::zeros(n, pad)])
        }
        _ => values,
    };
    Ok(FeatureMatrix {
        values,
        column_stats,
        provenance,
    })
}

/// Reads `external_id, v_in, v_out, fee, size, o_1 .. o_k` rows and orders
/// them by graph index. Every node must be present.
pub fn read_attributes(
    path: &Path,
    graph: &TransactionGraph,
) -> Result<Vec<TxAttributes>, FeatureError> {
    let fmt = |line: usize, message: String| FeatureError::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let file = File::open(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut slots: Vec<Option<TxAttributes>> = vec![None; graph.node_count()];
    for (i, row) in rdr.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| fmt(line, e.to_string()))?;
        if row.len() < 5 {
            return Err(fmt(line, format!("expected at least 5 columns, found {}", row.len())));
        }
        let num = |k: usize| -> Result<f64, FeatureError> {
            row[k]
                .parse::<f64>()
                .map_err(|_| fmt(line, format!("bad number {:?}", &row[k])))
        };
        let v_out = num(2)? as usize;
        let outputs = (5..row.len()).map(num).collect::<Result<Vec<_>, _>>()?;
        if outputs.len() != v_out {
            return Err(fmt(
                line,
                format!("v_out {v_out} but {} output values", outputs.len()),
            ));
        }
        let Some(v) = graph.index_of(&row[0]) else {
            continue;
        };
        slots[v] = Some(TxAttributes::new(num(1)? as u32, num(3)?, num(4)?, outputs));
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(v, a)| {
            a.ok_or_else(|| {
                FeatureError::DimensionMismatch(format!(
                    "no attributes for transaction {}",
                    graph.external_id(v)
                ))
            })
        })
        .collect()
}
