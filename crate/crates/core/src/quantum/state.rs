use num_complex::Complex64;

use super::{QuantumError, MAX_QUBITS};
use crate::quantum::rng::RandomSource;

/// A pure state over `n` qubits. Qubit `q` is bit `q` of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self, QuantumError> {
        check_qubits(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. Length must be a power of two; the caller is
    /// responsible for normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, QuantumError> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(QuantumError::BadAmplitudeLength(len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Exact per-qubit `<Z_q>`.
    pub fn expect_z(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, e) in out.iter_mut().enumerate() {
                if i >> q & 1 == 0 {
                    *e += p;
                } else {
                    *e -= p;
                }
            }
        }
        // Rounding on a unit-norm state can overshoot by an ulp.
        for e in &mut out {
            *e = e.clamp(-1.0, 1.0);
        }
        out
    }

    /// Shot-sampled estimate of `<Z_q>` from computational-basis measurements.
    pub fn sample_expect_z(
        &self,
        shots: usize,
        rng: &mut RandomSource,
    ) -> Result<Vec<f64>, QuantumError> {
        let mut cdf = Vec::with_capacity(self.amplitudes.len());
        let mut acc = 0.0;
        for a in &self.amplitudes {
            acc += a.norm_sqr();
            cdf.push(acc);
        }
        let mut sums = vec![0i64; self.n_qubits];
        for _ in 0..shots {
            let u = rng.uniform()? * acc;
            let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            for (q, s) in sums.iter_mut().enumerate() {
                *s += if idx >> q & 1 == 0 { 1 } else { -1 };
            }
        }
        Ok(sums
            .into_iter()
            .map(|s| s as f64 / shots.max(1) as f64)
            .collect())
    }
}

fn check_qubits(n: usize) -> Result<(), QuantumError> {
    if n == 0 || n > MAX_QUBITS {
        Err(QuantumError::QubitCount(n))
    } else {
        Ok(())
    }
}

/// Angle encoding: `RY(x_j)` on qubit `j`, remaining qubits left in `|0>`.
pub fn angle_encode(x: &[f64], n_qubits: usize) -> Result<StateVector, QuantumError> {
    check_qubits(n_qubits)?;
    if x.len() > n_qubits {
        return Err(QuantumError::TooManyFeatures {
            features: x.len(),
            qubits: n_qubits,
        });
    }
    // Product state: amplitude of |i> is the product of per-qubit factors.
    let halves: Vec<(f64, f64)> = x
        .iter()
        .map(|&theta| ((theta / 2.0).cos(), (theta / 2.0).sin()))
        .collect();
    let amplitudes = (0..1usize << n_qubits)
        .map(|i| {
            let mut amp = 1.0;
            for q in 0..n_qubits {
                let bit = i >> q & 1;
                amp *= match halves.get(q) {
                    Some(&(c, s)) => {
                        if bit == 0 {
                            c
                        } else {
                            s
                        }
                    }
                    None => {
                        if bit == 0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                if amp == 0.0 {
                    break;
                }
            }
            Complex64::new(amp, 0.0)
        })
        .collect();
    Ok(StateVector {
        n_qubits,
        amplitudes,
    })
}

/// Amplitude encoding: zero-pad to the next power of two and L2-normalize.
pub fn amplitude_encode(x: &[f64]) -> Result<StateVector, QuantumError> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if x.is_empty() || norm == 0.0 || !norm.is_finite() {
        return Err(QuantumError::ZeroVector);
    }
    let len = x.len().next_power_of_two().max(2);
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); len];
    for (a, &v) in amplitudes.iter_mut().zip(x) {
        *a = Complex64::new(v / norm, 0.0);
    }
    StateVector::from_amplitudes(amplitudes)
}
