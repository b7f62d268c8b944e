use serde::{Deserialize, Serialize};

use super::tape::Target;
use super::GnnError;
use crate::tensor::Tensor2;

/// Row-wise softmax, shifted by the row max.
pub fn softmax_rows(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    let cols = out.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

/// `Σ w · -log softmax(logits[row])[class]` and its gradient wrt `logits`.
pub(crate) fn weighted_ce(logits: &Tensor2, targets: &[Target]) -> (f64, Tensor2) {
    let mut grad = Tensor2::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for &(row, class, w) in targets {
        let z = logits.row(row);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = z.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
        loss += w * (log_sum - z[class]);
        for (c, g) in grad.row_mut(row).iter_mut().enumerate() {
            let p = (z[c] - log_sum).exp();
            *g += w * (p - if c == class { 1.0 } else { 0.0 });
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: Vec<f64>,
}

/// `w_c = N / (|C| N_c)` over the masked labeled nodes.
pub fn class_weights(
    targets: &[Option<usize>],
    mask: &[bool],
    n_classes: usize,
) -> Result<ClassWeights, GnnError> {
    if targets.len() != mask.len() {
        return Err(GnnError::ShapeMismatch(format!(
            "{} labels, {} mask entries",
            targets.len(),
            mask.len()
        )));
    }
    let mut counts = vec![0usize; n_classes];
    for (t, &m) in targets.iter().zip(mask) {
        if let (Some(c), true) = (t, m) {
            counts[*c] += 1;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(GnnError::MissingClass(c));
    }
    let n: usize = counts.iter().sum();
    Ok(ClassWeights {
        w: counts
            .iter()
            .map(|&nc| n as f64 / (n_classes * nc) as f64)
            .collect(),
    })
}

/// Loss targets for masked labeled nodes.
pub fn loss_targets(
    targets: &[Option<usize>],
    mask: &[bool],
    weights: &ClassWeights,
) -> Vec<Target> {
    targets
        .iter()
        .zip(mask)
        .enumerate()
        .filter_map(|(i, (t, &m))| match (t, m) {
            (Some(c), true) => Some((i, *c, weights.w[*c])),
            _ => None,
        })
        .collect()
}

/// Summed class-weighted cross-entropy over masked labeled nodes, with its
/// exact gradient wrt the logits.
pub fn weighted_cross_entropy(
    logits: &Tensor2,
    labels: &[Option<usize>],
    weights: &ClassWeights,
    mask: &[bool],
) -> Result<(f64, Tensor2), GnnError> {
    if labels.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(GnnError::ShapeMismatch(format!(
            "{} logit rows, {} labels, {} mask entries",
            logits.rows(),
            labels.len(),
            mask.len()
        )));
    }
    if labels.iter().flatten().any(|&c| c >= logits.cols() || c >= weights.w.len()) {
        return Err(GnnError::ShapeMismatch("label outside logit columns".into()));
    }
    let targets = loss_targets(labels, mask, weights);
    if targets.is_empty() {
        return Err(GnnError::EmptyMask);
    }
    Ok(weighted_ce(logits, &targets))
}
