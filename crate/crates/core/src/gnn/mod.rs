//! Graph neural network backbones and their training loop.

mod layers;
mod loss;
mod model;
mod tape;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::QuantumError;

pub use layers::{gat_forward, gcn_forward, gin_forward, GinMlp, GraphOperators, GAT_SLOPE};
pub use loss::{class_weights, loss_targets, softmax_rows, weighted_cross_entropy, ClassWeights};
pub use model::{
    init_params, logits, predict_proba, predict_proba_with, TrainedModel, MODEL_FORMAT_VERSION,
};
pub use tape::{Tape, Target, Var};
pub use train::{loss_and_gradients, train, train_with_source, Adam, TraceEntry};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class {0} has no training nodes")]
    MissingClass(usize),
    #[error("loss mask selects no labeled nodes")]
    EmptyMask,
    #[error("{0} split has no labeled nodes")]
    EmptySplit(&'static str),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Random(#[from] QuantumError),
    #[error("model file {path}: {message}")]
    Persist { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Gcn,
    Gat,
    Gin,
}

impl Backbone {
    pub const ALL: [Backbone; 3] = [Backbone::Gcn, Backbone::Gat, Backbone::Gin];

    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::Gcn => "gcn",
            Backbone::Gat => "gat",
            Backbone::Gin => "gin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
}

/// Negative slope of [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match (self, x > 0.0) {
            (_, true) => x,
            (Activation::Relu, false) => 0.0,
            (Activation::LeakyRelu, false) => LEAKY_SLOPE * x,
        }
    }

    pub(crate) fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
        }
    }
}

pub const DEFAULT_HIDDEN: usize = 64;
pub const OUTPUT_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub attention_heads: usize,
    pub gin_epsilon: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Two message-passing layers, `[in_dim, 64, 2]`.
    pub fn new(backbone: Backbone, in_dim: usize) -> Self {
        Self {
            backbone,
            layer_dims: vec![in_dim, DEFAULT_HIDDEN, OUTPUT_CLASSES],
            activation: Activation::Relu,
            attention_heads: 1,
            gin_epsilon: 0.0,
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 20,
            seed: 0,
        }
    }

    pub fn validate(&self, feature_dim: usize) -> Result<(), GnnError> {
        let dims = &self.layer_dims;
        if dims.len() < 2 {
            return Err(GnnError::Config("layer_dims needs at least 2 entries".into()));
        }
        if dims[0] != feature_dim {
            return Err(GnnError::Config(format!(
                "first layer dim {} but features have {feature_dim} columns",
                dims[0]
            )));
        }
        if *dims.last().unwrap() != OUTPUT_CLASSES {
            return Err(GnnError::Config("last layer dim must be 2".into()));
        }
        if dims.contains(&0) {
            return Err(GnnError::Config("layer dims must be positive".into()));
        }
        if self.attention_heads == 0 {
            return Err(GnnError::Config("attention_heads must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(GnnError::Config("learning_rate must be finite and >= 0".into()));
        }
        if !self.gin_epsilon.is_finite() {
            return Err(GnnError::Config("gin_epsilon must be finite".into()));
        }
        Ok(())
    }
}
