//! Shared fixtures for the criterion benchmarks in `benches/`.

use gnnguard_core::gnn::{init_params, Backbone, ModelConfig};
use gnnguard_core::synth::{generate, SyntheticSpec};
use gnnguard_core::{RandomSource, Tensor2, TransactionGraph};

/// Synthetic planted-fraud graph with `n` nodes and 32 features.
pub fn graph(n: usize) -> TransactionGraph {
    generate(&SyntheticSpec {
        node_count: n,
        seed: 11,
        ..SyntheticSpec::default()
    })
    .expect("valid spec")
}

/// Default two-layer config for `backbone` and freshly initialised weights.
pub fn model(backbone: Backbone, in_dim: usize) -> (ModelConfig, Vec<Tensor2>) {
    let config = ModelConfig::new(backbone, in_dim);
    let params = init_params(&config, &mut RandomSource::seeded(1)).expect("seeded source");
    (config, params)
}

pub fn uniform_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RandomSource::seeded(seed);
    (0..n).map(|_| rng.uniform().expect("seeded source")).collect()
}
