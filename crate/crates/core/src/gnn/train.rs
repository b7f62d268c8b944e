use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::layers::GraphOperators;
use super::loss::{class_weights, loss_targets, softmax_rows, weighted_ce};
use super::model::{check_params, init_params, record_forward, TrainedModel, MODEL_FORMAT_VERSION};
use super::tape::{Tape, Target, Var};
use super::{GnnError, ModelConfig, OUTPUT_CLASSES};
use crate::graph::TransactionGraph;
use crate::metrics::{confusion, prf_fpr};
use crate::quantum::RandomSource;
use crate::split::{Part, SplitAssignment};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, params: &[Tensor2]) -> Self {
        let zeros = || params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor2], grads: &[Tensor2]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((x, g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *x -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Summed weighted cross-entropy over `targets` and its gradient for each
/// parameter tensor. Returns the logits as well.
pub fn loss_and_gradients(
    config: &ModelConfig,
    ops: &GraphOperators,
    features: &Tensor2,
    params: &[Tensor2],
    targets: &Arc<Vec<Target>>,
) -> Result<(f64, Vec<Tensor2>, Tensor2), GnnError> {
    config.validate(features.cols())?;
    check_params(config, params)?;
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let logits = record_forward(&mut tape, ops, config, x, &vars);
    let loss = tape.weighted_ce(logits, targets.clone());
    let mut grads = tape.backward(loss);
    let param_grads = vars
        .iter()
        .zip(params)
        .map(|(v, p)| {
            grads[v.index()]
                .take()
                .unwrap_or_else(|| Tensor2::zeros(p.rows(), p.cols()))
        })
        .collect();
    Ok((
        tape.value(loss).data()[0],
        param_grads,
        tape.value(logits).clone(),
    ))
}

/// Trains with parameters initialised from `RandomSource::seeded(config.seed)`.
pub fn train(
    graph: &TransactionGraph,
    features: &Tensor2,
    split: &SplitAssignment,
    config: &ModelConfig,
) -> Result<TrainedModel, GnnError> {
    train_with_source(
        graph,
        features,
        split,
        config,
        &mut RandomSource::seeded(config.seed),
    )
}

/// Full-batch training with early stopping on validation illicit F1 at
/// threshold 0.5. Validation loss breaks F1 ties. The returned parameters
/// are those of the best epoch.
pub fn train_with_source(
    graph: &TransactionGraph,
    features: &Tensor2,
    split: &SplitAssignment,
    config: &ModelConfig,
    rng: &mut RandomSource,
) -> Result<TrainedModel, GnnError> {
    config.validate(features.cols())?;
    let n = graph.node_count();
    if features.rows() != n || split.assignment.len() != n {
        return Err(GnnError::ShapeMismatch(format!(
            "{n} nodes, {} feature rows, {} split entries",
            features.rows(),
            split.assignment.len()
        )));
    }
    let labels = graph.class_targets();
    let train_mask = split.mask(Part::Train);
    let val_mask = split.mask(Part::Val);
    let weights = class_weights(&labels, &train_mask, OUTPUT_CLASSES)?;
    let train_targets = Arc::new(loss_targets(&labels, &train_mask, &weights));
    let val_targets = loss_targets(&labels, &val_mask, &weights);
    if train_targets.is_empty() {
        return Err(GnnError::EmptySplit("train"));
    }
    if val_targets.is_empty() {
        return Err(GnnError::EmptySplit("val"));
    }
    let val_truth: Vec<bool> = val_targets.iter().map(|t| t.1 == 1).collect();

    let ops = GraphOperators::new(graph);
    let mut params = init_params(config, rng)?;
    let mut best = params.clone();
    let mut best_key = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut best_epoch = 0;
    let mut trace = Vec::new();
    let mut adam = Adam::new(config.learning_rate, &params);

    for epoch in 0..config.max_epochs {
        let (loss, grads, logits) =
            loss_and_gradients(config, &ops, features, &params, &train_targets)?;
        if !loss.is_finite() {
            return Err(GnnError::Diverged(epoch));
        }
        let (val_loss, _) = weighted_ce(&logits, &val_targets);
        let probs = softmax_rows(&logits);
        let val_scores: Vec<f64> = val_targets.iter().map(|t| probs.get(t.0, 1)).collect();
        let c = confusion(&val_scores, &val_truth, 0.5).expect("matching lengths");
        let val_f1 = prf_fpr(c).f1;
        trace.push(TraceEntry {
            epoch,
            train_loss: loss,
            val_loss,
            val_f1,
        });
        let key = (val_f1, -val_loss);
        if key > best_key {
            best_key = key;
            best_epoch = epoch;
            best.clone_from(&params);
        } else if epoch - best_epoch >= config.patience {
            break;
        }
        adam.step(&mut params, &grads);
    }
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        params: best,
        train_trace: trace,
        best_epoch,
    })
}
