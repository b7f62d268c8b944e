use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{gat_layer, gcn_layer, gin_layer, GraphOperators};
use super::loss::softmax_rows;
use super::tape::{Tape, Var};
use super::train::TraceEntry;
use super::{Backbone, GnnError, ModelConfig};
use crate::graph::TransactionGraph;
use crate::quantum::RandomSource;
use crate::tensor::Tensor2;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Parameter shapes in storage order.
///
/// * GCN, per layer: `W, b`
/// * GAT, per layer: `(W, a_src, a_dst)` per head, then `b`
/// * GIN, per layer: `W1, b1, W2, b2`
pub(crate) fn param_shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
    let mut shapes = Vec::new();
    for pair in config.layer_dims.windows(2) {
        let (i, o) = (pair[0], pair[1]);
        match config.backbone {
            Backbone::Gcn => shapes.extend([(i, o), (1, o)]),
            Backbone::Gat => {
                for _ in 0..config.attention_heads {
                    shapes.extend([(i, o), (o, 1), (o, 1)]);
                }
                shapes.push((1, o));
            }
            Backbone::Gin => shapes.extend([(i, o), (1, o), (o, o), (1, o)]),
        }
    }
    shapes
}

/// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
pub fn init_params(config: &ModelConfig, rng: &mut RandomSource) -> Result<Vec<Tensor2>, GnnError> {
    param_shapes(config)
        .into_iter()
        .map(|(r, c)| {
            if r == 1 {
                return Ok(Tensor2::zeros(r, c));
            }
            let bound = 1.0 / (r as f64).sqrt();
            let data = (0..r * c)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Tensor2::from_vec(r, c, data))
        })
        .collect()
}

/// Records the full forward pass and returns the logits.
pub(crate) fn record_forward(
    tape: &mut Tape,
    ops: &GraphOperators,
    config: &ModelConfig,
    x: Var,
    params: &[Var],
) -> Var {
    let n_layers = config.layer_dims.len() - 1;
    let mut h = x;
    let mut p = params.iter().copied();
    let mut next = || p.next().expect("parameter count checked");
    for layer in 0..n_layers {
        let act = (layer + 1 < n_layers).then_some(config.activation);
        h = match config.backbone {
            Backbone::Gcn => {
                let (w, b) = (next(), next());
                gcn_layer(tape, ops, h, w, b, act)
            }
            Backbone::Gat => {
                let heads: Vec<_> = (0..config.attention_heads)
                    .map(|_| (next(), next(), next()))
                    .collect();
                let b = next();
                gat_layer(tape, ops, h, &heads, b, act)
            }
            Backbone::Gin => {
                let mlp = [next(), next(), next(), next()];
                gin_layer(tape, ops, h, mlp, config.gin_epsilon, config.activation, act)
            }
        };
    }
    h
}

pub(crate) fn check_params(config: &ModelConfig, params: &[Tensor2]) -> Result<(), GnnError> {
    let shapes = param_shapes(config);
    if shapes.len() != params.len()
        || shapes.iter().zip(params).any(|(s, p)| *s != p.shape())
    {
        return Err(GnnError::ShapeMismatch(format!(
            "parameters do not match layer_dims {:?}",
            config.layer_dims
        )));
    }
    Ok(())
}

pub fn logits(
    config: &ModelConfig,
    ops: &GraphOperators,
    features: &Tensor2,
    params: &[Tensor2],
) -> Result<Tensor2, GnnError> {
    config.validate(features.cols())?;
    check_params(config, params)?;
    if features.rows() != ops.node_count() {
        return Err(GnnError::ShapeMismatch(format!(
            "{} feature rows for {} nodes",
            features.rows(),
            ops.node_count()
        )));
    }
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = record_forward(&mut tape, ops, config, x, &vars);
    Ok(tape.value(out).clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ModelConfig,
    pub params: Vec<Tensor2>,
    pub train_trace: Vec<TraceEntry>,
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> Result<(), GnnError> {
        fs::write(path, self.to_json()).map_err(|e| GnnError::Persist {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, GnnError> {
        let err = |message: String| GnnError::Persist {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let model = Self::from_json(&text).map_err(|e| err(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(err(format!("unsupported format_version {}", model.format_version)));
        }
        check_params(&model.config, &model.params).map_err(|e| err(e.to_string()))?;
        Ok(model)
    }
}

/// Softmax class probabilities for every node, unlabeled ones included.
pub fn predict_proba_with(
    model: &TrainedModel,
    ops: &GraphOperators,
    features: &Tensor2,
) -> Result<Tensor2, GnnError> {
    Ok(softmax_rows(&logits(&model.config, ops, features, &model.params)?))
}

pub fn predict_proba(
    model: &TrainedModel,
    graph: &TransactionGraph,
    features: &Tensor2,
) -> Result<Tensor2, GnnError> {
    predict_proba_with(model, &GraphOperators::new(graph), features)
}
