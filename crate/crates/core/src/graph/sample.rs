use super::{GraphError, Label, TransactionGraph};
use crate::quantum::RandomSource;
use crate::quota::largest_remainder;

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.05;

/// Class-stratified node sample of `round(fraction * |V|)` nodes.
///
/// Per-class quotas use largest-remainder rounding so each class count is
/// within one node of its proportional share; members are drawn by shuffling
/// each class with `rng`. Returned indices are sorted.
pub fn stratified_sample(
    graph: &TransactionGraph,
    fraction: f64,
    rng: &mut RandomSource,
) -> Result<Vec<usize>, GraphError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(GraphError::FractionOutOfRange(fraction));
    }
    let classes = [Label::Licit, Label::Illicit, Label::Unknown];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (v, l) in graph.labels().iter().enumerate() {
        let c = classes.iter().position(|x| x == l).expect("exhaustive");
        members[c].push(v);
    }
    let n = graph.node_count();
    let total = ((fraction * n as f64).round() as usize).min(n);
    let shares: Vec<f64> = members.iter().map(|m| m.len() as f64).collect();
    let quotas = largest_remainder(total, &shares);
    let mut out = Vec::with_capacity(total);
    for (mut m, q) in members.into_iter().zip(quotas) {
        rng.shuffle(&mut m)?;
        out.extend_from_slice(&m[..q]);
    }
    out.sort_unstable();
    Ok(out)
}
