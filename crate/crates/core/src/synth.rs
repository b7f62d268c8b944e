//! Planted-fraud benchmark graphs.
//!
//! Illicit nodes are grouped into rings that span a few consecutive time
//! steps and pay densely forward to later members. Everything else
//! is a random causal background. Illicit features carry a mean shift whose
//! direction rotates with time, so models trained on early steps see a
//! slightly different signature than the one in late steps.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, Label, TransactionGraph};
use crate::quantum::{QuantumError, RandomSource};
use crate::tensor::Tensor2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Random(#[from] QuantumError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub node_count: usize,
    pub time_steps: u32,
    pub illicit_fraction: f64,
    /// Share of non-illicit nodes whose label is hidden.
    pub unknown_fraction: f64,
    pub feature_dim: usize,
    /// Members per illicit ring.
    pub ring_size: usize,
    /// Consecutive time steps covered by one ring.
    pub ring_span: u32,
    /// Probability of each forward edge between ring members.
    pub community_density: f64,
    /// Mean background out-degree.
    pub background_degree: f64,
    /// Probability that an illicit node also pays into the licit background.
    pub cash_out_rate: f64,
    pub noise_scale: f64,
    /// Length of the illicit mean shift.
    pub signal: f64,
    /// Rotation of the shift direction between the first and last step, in
    /// quarter turns.
    pub drift: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            node_count: 2000,
            time_steps: 49,
            illicit_fraction: 0.03,
            unknown_fraction: 0.2,
            feature_dim: 32,
            ring_size: 5,
            ring_span: 3,
            community_density: 0.8,
            background_degree: 1.5,
            cash_out_rate: 0.3,
            noise_scale: 1.0,
            signal: 2.0,
            drift: 0.5,
            seed: 0,
        }
    }
}

/// Columns that carry the illicit shift.
pub const SIGNAL_COLUMNS: usize = 8;

impl SyntheticSpec {
    pub fn illicit_count(&self) -> usize {
        (self.illicit_fraction * self.node_count as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.node_count < 2 {
            return bad("node_count must be at least 2");
        }
        if self.time_steps < 2 {
            return bad("time_steps must be at least 2");
        }
        if !(self.illicit_fraction > 0.0 && self.illicit_fraction < 1.0) {
            return bad("illicit_fraction must lie in (0, 1)");
        }
        if self.illicit_count() == 0 || self.illicit_count() == self.node_count {
            return bad("illicit_fraction leaves one class empty");
        }
        if !(0.0..1.0).contains(&self.unknown_fraction) {
            return bad("unknown_fraction must lie in [0, 1)");
        }
        if self.feature_dim < SIGNAL_COLUMNS {
            return bad("feature_dim must be at least 8");
        }
        if self.ring_size < 2 || self.ring_span < 2 || self.ring_span > self.time_steps {
            return bad("rings need at least 2 members over 2..=time_steps steps");
        }
        for (name, p) in [
            ("community_density", self.community_density),
            ("cash_out_rate", self.cash_out_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::InvalidSpec(format!("{name} must lie in [0, 1]")));
            }
        }
        for (name, x) in [
            ("background_degree", self.background_degree),
            ("noise_scale", self.noise_scale),
            ("signal", self.signal),
            ("drift", self.drift),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(SynthError::InvalidSpec(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Draws `count` with integer part plus a Bernoulli remainder.
fn stochastic_round(rng: &mut RandomSource, mean: f64) -> Result<usize, QuantumError> {
    let base = mean.floor();
    Ok(base as usize + (rng.uniform()? < mean - base) as usize)
}

/// Generates a labeled causal graph. Node ids are `tx<k>` with `k` following
/// time order.
pub fn generate(spec: &SyntheticSpec) -> Result<TransactionGraph, SynthError> {
    spec.validate()?;
    let mut rng = RandomSource::seeded(spec.seed);
    let n = spec.node_count;
    let t_max = spec.time_steps;
    let n_illicit = spec.illicit_count();

    // Illicit rings first, then the background, then sort everything by step.
    let mut steps: Vec<u32> = Vec::with_capacity(n);
    let mut ring_of: Vec<Option<usize>> = Vec::with_capacity(n);
    let n_rings = n_illicit.div_ceil(spec.ring_size);
    // Ring start steps are spread evenly over the horizon with a quarter-slot
    // jitter, so every window of a few steps holds some illicit activity.
    let slots = (t_max - spec.ring_span + 1) as f64;
    for ring in 0..n_rings {
        let u = 0.25 + 0.5 * rng.uniform()?;
        let start = 1 + ((ring as f64 + u) * slots / n_rings as f64).floor() as u32;
        let members = spec.ring_size.min(n_illicit - ring * spec.ring_size);
        for m in 0..members {
            steps.push(start + (m as u32 % spec.ring_span));
            ring_of.push(Some(ring));
        }
    }
    for _ in n_illicit..n {
        steps.push(1 + rng.below(t_max as usize)? as u32);
        ring_of.push(None);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (steps[i], i));
    let steps: Vec<u32> = order.iter().map(|&i| steps[i]).collect();
    let ring_of: Vec<Option<usize>> = order.iter().map(|&i| ring_of[i]).collect();

    let mut by_step: Vec<Vec<usize>> = vec![Vec::new(); t_max as usize + 2];
    for (v, &t) in steps.iter().enumerate() {
        by_step[t as usize].push(v);
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut push = |s: usize, d: usize, edges: &mut Vec<(usize, usize)>| {
        if seen.insert((s, d)) {
            edges.push((s, d));
        }
    };

    // Layered flows inside each ring.
    let mut ring_members: Vec<Vec<usize>> = vec![Vec::new(); n_rings];
    for (v, r) in ring_of.iter().enumerate() {
        if let Some(r) = r {
            ring_members[*r].push(v);
        }
    }
    for members in &ring_members {
        for &s in members {
            for &d in members {
                if steps[s] < steps[d] && rng.uniform()? < spec.community_density {
                    push(s, d, &mut edges);
                }
            }
        }
    }

    // Background: each node pays a few nodes in the next handful of steps.
    let horizon = 3u32;
    for v in 0..n {
        let t = steps[v];
        if t == t_max {
            continue;
        }
        let mut k = stochastic_round(&mut rng, spec.background_degree)?;
        if ring_of[v].is_some() {
            k = (rng.uniform()? < spec.cash_out_rate) as usize;
        }
        for _ in 0..k {
            let dt = 1 + rng.below(horizon.min(t_max - t) as usize)? as u32;
            let pool = &by_step[(t + dt) as usize];
            if pool.is_empty() {
                continue;
            }
            let d = pool[rng.below(pool.len())?];
            push(v, d, &mut edges);
        }
    }

    let labels = assign_labels(&mut rng, &ring_of, spec.unknown_fraction)?;
    let features = features(&mut rng, spec, &steps, &ring_of)?;
    let ids = (0..n).map(|k| format!("tx{k}")).collect();
    Ok(TransactionGraph::from_parts(ids, steps, labels, features, &edges)?)
}

fn assign_labels(
    rng: &mut RandomSource,
    ring_of: &[Option<usize>],
    unknown_fraction: f64,
) -> Result<Vec<Label>, QuantumError> {
    let mut labels: Vec<Label> = ring_of
        .iter()
        .map(|r| if r.is_some() { Label::Illicit } else { Label::Licit })
        .collect();
    let mut licit: Vec<usize> = (0..labels.len()).filter(|&v| ring_of[v].is_none()).collect();
    rng.shuffle(&mut licit)?;
    let hidden = (unknown_fraction * licit.len() as f64).round() as usize;
    for &v in &licit[..hidden] {
        labels[v] = Label::Unknown;
    }
    Ok(labels)
}

fn features(
    rng: &mut RandomSource,
    spec: &SyntheticSpec,
    steps: &[u32],
    ring_of: &[Option<usize>],
) -> Result<Tensor2, QuantumError> {
    let n = steps.len();
    let d = spec.feature_dim;
    let half = SIGNAL_COLUMNS / 2;
    let mut x = Tensor2::zeros(n, d);
    for v in 0..n {
        for c in 0..d {
            x.set(v, c, spec.noise_scale * rng.normal()?);
        }
        if ring_of[v].is_none() {
            continue;
        }
        // Shift along u = first half of the signal block, rotating towards v.
        let phase = (steps[v] - 1) as f64 / (spec.time_steps - 1) as f64;
        let angle = spec.drift * std::f64::consts::FRAC_PI_2 * phase;
        let per_col = spec.signal / (half as f64).sqrt();
        for c in 0..half {
            let row = x.row_mut(v);
            row[c] += per_col * angle.cos();
            row[half + c] += per_col * angle.sin();
        }
    }
    Ok(x)
}
