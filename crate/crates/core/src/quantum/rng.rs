//! Pluggable randomness.
//!
//! Every stochastic step in the toolkit (sampling, shuffling, weight
//! initialization, synthetic data) draws from a [`RandomSource`]. The default is
//! a seeded ChaCha stream; an entropy-file source replays bytes captured from
//! an external generator (for example a hardware QRNG) exactly once each.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::QuantumError;

const MANTISSA_BITS: u32 = 53;
const MANTISSA_SCALE: f64 = 1.0 / (1u64 << MANTISSA_BITS) as f64;

/// Serializable description of a random source, as found in run configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RandomSourceSpec {
    SeededDeterministic { seed: u64 },
    EntropyFile { path: String },
}

impl RandomSourceSpec {
    pub fn open(&self) -> Result<RandomSource, QuantumError> {
        match self {
            RandomSourceSpec::SeededDeterministic { seed } => Ok(RandomSource::seeded(*seed)),
            RandomSourceSpec::EntropyFile { path } => RandomSource::from_entropy_file(path),
        }
    }
}

#[derive(Debug, Clone)]
enum SourceState {
    Seeded(ChaCha8Rng),
    Entropy { bytes: Vec<u8>, pos: usize },
}

#[derive(Debug, Clone)]
pub struct RandomSource {
    state: SourceState,
}

impl RandomSource {
    pub fn seeded(seed: u64) -> Self {
        Self {
            state: SourceState::Seeded(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// Wraps an in-memory entropy buffer, consumed front to back.
    pub fn from_entropy(bytes: Vec<u8>) -> Self {
        Self {
            state: SourceState::Entropy { bytes, pos: 0 },
        }
    }

    pub fn from_entropy_file(path: impl AsRef<Path>) -> Result<Self, QuantumError> {
        let bytes = fs::read(path.as_ref()).map_err(|e| QuantumError::EntropyFile {
            path: path.as_ref().display().to_string(),
            source: e,
        })?;
        Ok(Self::from_entropy(bytes))
    }

    /// Derives an independent seeded child stream. The parent advances by one draw.
    pub fn fork(&mut self) -> Result<RandomSource, QuantumError> {
        Ok(RandomSource::seeded(self.next_u64()?))
    }

    pub fn is_seeded(&self) -> bool {
        matches!(self.state, SourceState::Seeded(_))
    }

    /// Bytes still available; `None` for unbounded seeded streams.
    pub fn remaining_entropy(&self) -> Option<usize> {
        match &self.state {
            SourceState::Seeded(_) => None,
            SourceState::Entropy { bytes, pos } => Some(bytes.len() - pos),
        }
    }

    /// Next 64 raw bits. Entropy sources read 8 bytes big-endian.
    pub fn next_u64(&mut self) -> Result<u64, QuantumError> {
        match &mut self.state {
            SourceState::Seeded(rng) => Ok(rng.next_u64()),
            SourceState::Entropy { bytes, pos } => {
                let end = *pos + 8;
                if end > bytes.len() {
                    return Err(QuantumError::EntropyExhausted {
                        needed: 8,
                        available: bytes.len() - *pos,
                    });
                }
                let mut word = [0u8; 8];
                word.copy_from_slice(&bytes[*pos..end]);
                *pos = end;
                Ok(u64::from_be_bytes(word))
            }
        }
    }

    /// Uniform draw in `[0, 1)` from 53 fresh bits, as `k / 2^53`.
    pub fn uniform(&mut self) -> Result<f64, QuantumError> {
        let k = self.next_u64()? >> (64 - MANTISSA_BITS);
        Ok(k as f64 * MANTISSA_SCALE)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> Result<f64, QuantumError> {
        Ok(lo + (hi - lo) * self.uniform()?)
    }

    /// Unbiased integer in `[0, n)` by rejection. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> Result<usize, QuantumError> {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64()?;
            if x < zone {
                return Ok((x % n) as usize);
            }
        }
    }

    /// Standard normal draw (Box-Muller, one value per pair of uniforms).
    pub fn normal(&mut self) -> Result<f64, QuantumError> {
        let u1 = 1.0 - self.uniform()?;
        let u2 = self.uniform()?;
        Ok((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) -> Result<(), QuantumError> {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1)?;
            items.swap(i, j);
        }
        Ok(())
    }
}
