use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::StateVector;
use super::QuantumError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum Gate {
    Rotation { axis: Axis, qubit: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn ry(qubit: usize, angle: f64) -> Self {
        Gate::Rotation {
            axis: Axis::Y,
            qubit,
            angle,
        }
    }

    fn max_qubit(&self) -> usize {
        match *self {
            Gate::Rotation { qubit, .. } => qubit,
            Gate::Cnot { control, target } => control.max(target),
        }
    }

    /// The 2x2 matrix `[[a, b], [c, d]]` of a rotation.
    pub(crate) fn rotation_matrix(axis: Axis, angle: f64) -> [Complex64; 4] {
        let (s, c) = (angle / 2.0).sin_cos();
        let z = Complex64::new(0.0, 0.0);
        match axis {
            Axis::X => [
                Complex64::new(c, 0.0),
                Complex64::new(0.0, -s),
                Complex64::new(0.0, -s),
                Complex64::new(c, 0.0),
            ],
            Axis::Y => [
                Complex64::new(c, 0.0),
                Complex64::new(-s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(c, 0.0),
            ],
            Axis::Z => [Complex64::new(c, -s), z, z, Complex64::new(c, s)],
        }
    }
}

/// An ordered gate list, serialized as a JSON array of gates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CircuitSpec {
    pub gates: Vec<Gate>,
}

impl CircuitSpec {
    pub fn new(gates: Vec<Gate>) -> Self {
        Self { gates }
    }

    /// Variational ansatz: `depth` layers of per-qubit `RY` followed by a ring of
    /// CNOTs. `params` is laid out layer-major, `depth * n_qubits` angles.
    pub fn ansatz(n_qubits: usize, depth: usize, params: &[f64]) -> Self {
        assert_eq!(params.len(), n_qubits * depth, "ansatz parameter count");
        let mut gates = Vec::new();
        for layer in 0..depth {
            for q in 0..n_qubits {
                gates.push(Gate::ry(q, params[layer * n_qubits + q]));
            }
            gates.extend(entangling_ring(n_qubits));
        }
        Self { gates }
    }

    /// Reversed gate order with negated angles.
    pub fn inverse(&self) -> Self {
        let gates = self
            .gates
            .iter()
            .rev()
            .map(|g| match *g {
                Gate::Rotation { axis, qubit, angle } => Gate::Rotation {
                    axis,
                    qubit,
                    angle: -angle,
                },
                cnot @ Gate::Cnot { .. } => cnot,
            })
            .collect();
        Self { gates }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<(), QuantumError> {
        for g in &self.gates {
            if g.max_qubit() >= n_qubits {
                return Err(QuantumError::QubitOutOfRange {
                    qubit: g.max_qubit(),
                    n_qubits,
                });
            }
            if let Gate::Cnot { control, target } = *g {
                if control == target {
                    return Err(QuantumError::CnotSelfTarget(control));
                }
            }
        }
        Ok(())
    }
}

fn entangling_ring(n_qubits: usize) -> Vec<Gate> {
    match n_qubits {
        0 | 1 => Vec::new(),
        2 => vec![Gate::Cnot {
            control: 0,
            target: 1,
        }],
        n => (0..n)
            .map(|q| Gate::Cnot {
                control: q,
                target: (q + 1) % n,
            })
            .collect(),
    }
}

/// Applies `circuit` in order, updating amplitude pairs in place.
pub fn apply_circuit(
    mut state: StateVector,
    circuit: &CircuitSpec,
) -> Result<StateVector, QuantumError> {
    circuit.validate(state.n_qubits())?;
    for gate in &circuit.gates {
        apply_gate(&mut state, gate);
    }
    Ok(state)
}

pub(crate) fn apply_gate(state: &mut StateVector, gate: &Gate) {
    let amps = state.amplitudes_mut();
    match *gate {
        Gate::Rotation { axis, qubit, angle } => {
            let [a, b, c, d] = Gate::rotation_matrix(axis, angle);
            let stride = 1usize << qubit;
            for base in (0..amps.len()).step_by(stride << 1) {
                for i in base..base + stride {
                    let (lo, hi) = (amps[i], amps[i + stride]);
                    amps[i] = a * lo + b * hi;
                    amps[i + stride] = c * lo + d * hi;
                }
            }
        }
        Gate::Cnot { control, target } => {
            let (cmask, tmask) = (1usize << control, 1usize << target);
            for i in 0..amps.len() {
                if i & cmask != 0 && i & tmask == 0 {
                    amps.swap(i, i | tmask);
                }
            }
        }
    }
}
