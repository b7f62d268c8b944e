use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GraphError, TransactionGraph};

pub const DEFAULT_DEGREE_MIN: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    /// Total (in + out) degree -> node count.
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Weakly connected components.
    pub component_count: usize,
    /// Power-law exponent fitted to degrees >= `degree_min`; `None` when the
    /// tail is empty or sits entirely at `degree_min`.
    pub gamma_estimate: Option<f64>,
    pub degree_min: usize,
    pub tail_size: usize,
}

pub fn graph_stats(graph: &TransactionGraph) -> Result<GraphStats, GraphError> {
    let n = graph.node_count();
    if n < 2 {
        return Err(GraphError::TooFewNodes);
    }
    let degrees: Vec<usize> = (0..n).map(|v| graph.degree(v)).collect();
    if degrees.iter().all(|&d| d == degrees[0]) {
        return Err(GraphError::DegenerateDegrees);
    }
    let mut degree_histogram = BTreeMap::new();
    for &d in &degrees {
        *degree_histogram.entry(d).or_insert(0) += 1;
    }
    let tail_size = degrees.iter().filter(|&&d| d >= DEFAULT_DEGREE_MIN).count();
    Ok(GraphStats {
        degree_histogram,
        component_count: weak_components(graph),
        gamma_estimate: fit_power_law(&degrees, DEFAULT_DEGREE_MIN),
        degree_min: DEFAULT_DEGREE_MIN,
        tail_size,
    })
}

fn weak_components(graph: &TransactionGraph) -> usize {
    let n = graph.node_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, d) in graph.edges() {
        let (a, b) = (find(&mut parent, s), find(&mut parent, d));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).filter(|&v| find(&mut parent, v) == v).count()
}

/// Maximum-likelihood exponent of a discrete power law `P(d) ∝ d^-γ`,
/// `d >= d_min`.
///
/// Maximizes `-n ln ζ(γ, d_min) - γ Σ ln d_i` over `γ ∈ (1, 12]` by golden
/// section; the log-likelihood is concave in `γ`.
pub fn fit_power_law(degrees: &[usize], d_min: usize) -> Option<f64> {
    assert!(d_min >= 1, "d_min must be positive");
    let tail: Vec<f64> = degrees
        .iter()
        .filter(|&&d| d >= d_min)
        .map(|&d| d as f64)
        .collect();
    if tail.is_empty() || tail.iter().all(|&d| d == d_min as f64) {
        return None;
    }
    let n = tail.len() as f64;
    let log_sum: f64 = tail.iter().map(|d| d.ln()).sum();
    let neg_ll = |g: f64| n * hurwitz_zeta(g, d_min as f64).ln() + g * log_sum;

    let (mut lo, mut hi) = (1.0 + 1e-9, 12.0);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (neg_ll(x1), neg_ll(x2));
    while hi - lo > 1e-10 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = neg_ll(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = neg_ll(x2);
        }
    }
    Some(0.5 * (lo + hi))
}

/// `ζ(s, a) = Σ_{k>=0} (k + a)^-s` for `s > 1`, `a > 0`: direct sum over the
/// head plus an Euler-Maclaurin tail.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const HEAD: usize = 24;
    let mut sum = 0.0;
    for k in 0..HEAD {
        sum += (a + k as f64).powf(-s);
    }
    let m = a + HEAD as f64;
    let mut tail = m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s);
    // Bernoulli corrections B2/2!, B4/4!, B6/4!, B8/8!.
    let coeffs = [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0];
    let mut rising = s;
    let mut power = m.powf(-s - 1.0);
    for (j, c) in coeffs.iter().enumerate() {
        tail += c * rising * power;
        let k = 2.0 * j as f64;
        rising *= (s + k + 1.0) * (s + k + 2.0);
        power /= m * m;
    }
    sum + tail
}
