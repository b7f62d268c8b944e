//! Measurement-mediated message passing: each node's neighbourhood mean is
//! angle-encoded, pushed through a variational circuit, and read out as
//! per-qubit Z expectations.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::circuit::{apply_circuit, CircuitSpec};
use super::state::angle_encode;
use super::{QuantumError, RandomSource, MAX_QUBITS};
use crate::graph::TransactionGraph;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantumLayerConfig {
    pub n_qubits: usize,
    pub depth: usize,
}

impl Default for QuantumLayerConfig {
    fn default() -> Self {
        Self {
            n_qubits: 4,
            depth: 2,
        }
    }
}

impl QuantumLayerConfig {
    pub fn param_count(&self) -> usize {
        self.n_qubits * self.depth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumLayerOutput {
    /// `node_count x n_qubits`, entries in `[-1, 1]`.
    pub values: Tensor2,
    /// Aggregated inputs that fell outside `[0, π]` and were clamped.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumLayer {
    pub config: QuantumLayerConfig,
    /// Ansatz angles, layer-major.
    pub params: Vec<f64>,
}

impl QuantumLayer {
    pub fn new(config: QuantumLayerConfig, params: Vec<f64>) -> Result<Self, QuantumError> {
        if config.n_qubits == 0 || config.n_qubits > MAX_QUBITS {
            return Err(QuantumError::QubitCount(config.n_qubits));
        }
        if params.len() != config.param_count() {
            return Err(QuantumError::ShapeMismatch(format!(
                "{} circuit params, expected {}",
                params.len(),
                config.param_count()
            )));
        }
        Ok(Self { config, params })
    }

    /// Angles drawn uniformly from `[-π, π)`.
    pub fn init(config: QuantumLayerConfig, rng: &mut RandomSource) -> Result<Self, QuantumError> {
        let params = (0..config.param_count())
            .map(|_| rng.uniform_range(-PI, PI))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(config, params)
    }

    pub fn forward(
        &self,
        graph: &TransactionGraph,
        h: &Tensor2,
    ) -> Result<QuantumLayerOutput, QuantumError> {
        let (angles, clamped) = aggregate(graph, h, self.config.n_qubits)?;
        Ok(QuantumLayerOutput {
            values: self.measure(&angles, &self.params)?,
            clamped,
        })
    }

    /// Gradient of `Σ upstream ⊙ forward(h)` with respect to each circuit
    /// angle, by the parameter-shift rule.
    pub fn param_gradient(
        &self,
        graph: &TransactionGraph,
        h: &Tensor2,
        upstream: &Tensor2,
    ) -> Result<Vec<f64>, QuantumError> {
        let (angles, _) = aggregate(graph, h, self.config.n_qubits)?;
        if upstream.shape() != (angles.len(), self.config.n_qubits) {
            return Err(QuantumError::ShapeMismatch(format!(
                "upstream {:?}, output ({}, {})",
                upstream.shape(),
                angles.len(),
                self.config.n_qubits
            )));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut shifted = self.params.clone();
        for (k, g) in grad.iter_mut().enumerate() {
            shifted[k] = self.params[k] + FRAC_PI_2;
            let plus = self.measure(&angles, &shifted)?;
            shifted[k] = self.params[k] - FRAC_PI_2;
            let minus = self.measure(&angles, &shifted)?;
            shifted[k] = self.params[k];
            *g = plus
                .data()
                .iter()
                .zip(minus.data())
                .zip(upstream.data())
                .map(|((p, m), u)| u * (p - m) / 2.0)
                .sum();
        }
        Ok(grad)
    }

    fn measure(&self, angles: &[Vec<f64>], params: &[f64]) -> Result<Tensor2, QuantumError> {
        let n = self.config.n_qubits;
        let circuit = CircuitSpec::ansatz(n, self.config.depth, params);
        let mut out = Tensor2::zeros(angles.len(), n);
        for (v, x) in angles.iter().enumerate() {
            let state = apply_circuit(angle_encode(x, n)?, &circuit)?;
            out.row_mut(v).copy_from_slice(&state.expect_z());
        }
        Ok(out)
    }
}

/// Per-node mean over the neighbourhood plus the node itself, clamped to
/// `[0, π]`.
fn aggregate(
    graph: &TransactionGraph,
    h: &Tensor2,
    n_qubits: usize,
) -> Result<(Vec<Vec<f64>>, usize), QuantumError> {
    if h.rows() != graph.node_count() {
        return Err(QuantumError::ShapeMismatch(format!(
            "{} feature rows for {} nodes",
            h.rows(),
            graph.node_count()
        )));
    }
    if h.cols() > n_qubits {
        return Err(QuantumError::TooManyFeatures {
            features: h.cols(),
            qubits: n_qubits,
        });
    }
    let mut clamped = 0;
    let mut out = Vec::with_capacity(h.rows());
    for v in 0..h.rows() {
        let nbrs = graph.neighbors(v);
        let mut m = h.row(v).to_vec();
        for &u in nbrs {
            for (a, b) in m.iter_mut().zip(h.row(u)) {
                *a += b;
            }
        }
        let k = (nbrs.len() + 1) as f64;
        for a in &mut m {
            *a /= k;
            if !(0.0..=PI).contains(a) {
                clamped += 1;
                *a = a.clamp(0.0, PI);
            }
        }
        out.push(m);
    }
    Ok((out, clamped))
}

/// One-shot form of [`QuantumLayer::forward`].
pub fn quantum_message_layer(
    graph: &TransactionGraph,
    h: &Tensor2,
    circuit_params: &[f64],
    n_qubits: usize,
    depth: usize,
) -> Result<QuantumLayerOutput, QuantumError> {
    QuantumLayer::new(QuantumLayerConfig { n_qubits, depth }, circuit_params.to_vec())?
        .forward(graph, h)
}
