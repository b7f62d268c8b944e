//! Randomness sources, feature encodings and a small statevector simulator.

mod circuit;
mod layer;
mod rng;
mod state;

use thiserror::Error;

pub use circuit::{apply_circuit, Axis, CircuitSpec, Gate};
pub use layer::{quantum_message_layer, QuantumLayer, QuantumLayerConfig, QuantumLayerOutput};
pub use rng::{RandomSource, RandomSourceSpec};
pub use state::{amplitude_encode, angle_encode, StateVector};

/// Largest simulated register; 2^12 amplitudes per state.
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("cannot read entropy file {path}: {source}")]
    EntropyFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("entropy exhausted: needed {needed} bytes, {available} available")]
    EntropyExhausted { needed: usize, available: usize },
    #[error("qubit count {0} outside 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("amplitude vector length {0} is not a power of two")]
    BadAmplitudeLength(usize),
    #[error("{features} features do not fit in {qubits} qubits")]
    TooManyFeatures { features: usize, qubits: usize },
    #[error("cannot amplitude-encode the zero vector")]
    ZeroVector,
    #[error("qubit {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("cnot control and target are both qubit {0}")]
    CnotSelfTarget(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
