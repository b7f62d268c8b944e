//! Fusion of base-model probabilities: fixed and tuned soft voting, and a
//! logistic stacking meta-classifier.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{confusion, prf_fpr};
use crate::tensor::Tensor2;

pub const DEFAULT_GRID_STEP: f64 = 0.05;
pub const DEFAULT_FPR_CAP: f64 = 0.01;
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid weights {0:?}: need non-negative entries summing to 1")]
    InvalidWeights(Vec<f64>),
    #[error("grid step {0} must lie in (0, 0.5] and divide 1")]
    InvalidGridStep(f64),
    #[error("degenerate validation set: {0}")]
    DegenerateValidation(String),
    #[error("{path}: {message}")]
    Persist { path: String, message: String },
}

fn check_probas(probas: &[Tensor2]) -> Result<(usize, usize), EnsembleError> {
    let first = probas
        .first()
        .ok_or_else(|| EnsembleError::ShapeMismatch("no base models".into()))?;
    let shape = first.shape();
    if shape.1 != 2 {
        return Err(EnsembleError::ShapeMismatch(format!(
            "probability matrices need 2 columns, found {}",
            shape.1
        )));
    }
    if let Some(p) = probas.iter().find(|p| p.shape() != shape) {
        return Err(EnsembleError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            p.shape(),
            shape
        )));
    }
    Ok(shape)
}

fn check_weights(w: &[f64], k: usize) -> Result<(), EnsembleError> {
    let sum: f64 = w.iter().sum();
    if w.len() != k || w.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(EnsembleError::InvalidWeights(w.to_vec()));
    }
    Ok(())
}

/// `P = Σ w_i P_i`.
pub fn soft_vote(probas: &[Tensor2], w: &[f64]) -> Result<Tensor2, EnsembleError> {
    let (rows, cols) = check_probas(probas)?;
    check_weights(w, probas.len())?;
    let mut out = Tensor2::zeros(rows, cols);
    for (p, &wi) in probas.iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        for (o, x) in out.data_mut().iter_mut().zip(p.data()) {
            *o += wi * x;
        }
    }
    Ok(out)
}

pub fn uniform_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningObjective {
    /// Illicit recall subject to the FPR cap.
    ConstrainedRecall,
    /// No grid point met the cap; illicit F1 over all points.
    F1Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub w: Vec<f64>,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub grid_step: f64,
    pub fpr_cap: f64,
    pub threshold: f64,
    pub objective: TuningObjective,
    pub objective_value: f64,
    pub constraint_satisfied: bool,
    pub fallback: bool,
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub w: Vec<f64>,
    pub tuning_record: TuningRecord,
}

impl EnsembleWeights {
    pub fn save(&self, path: &Path) -> Result<(), EnsembleError> {
        save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, EnsembleError> {
        load_json(path)
    }
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EnsembleError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text).map_err(|e| EnsembleError::Persist {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EnsembleError> {
    let err = |message: String| EnsembleError::Persist {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// All ways to split `units` into `k` non-negative parts, ascending
/// lexicographic order.
pub fn simplex_grid(k: usize, units: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for u in 0..=left {
            prefix.push(u);
            rec(k - 1, left - u, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, units, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

pub fn grid_units(step: f64) -> Result<usize, EnsembleError> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(EnsembleError::InvalidGridStep(step));
    }
    let units = (1.0 / step).round();
    if (units * step - 1.0).abs() > 1e-9 {
        return Err(EnsembleError::InvalidGridStep(step));
    }
    Ok(units as usize)
}

fn check_validation(probas: &[Tensor2], labels: &[bool]) -> Result<(), EnsembleError> {
    let (rows, _) = check_probas(probas)?;
    if rows != labels.len() {
        return Err(EnsembleError::ShapeMismatch(format!(
            "{rows} rows, {} labels",
            labels.len()
        )));
    }
    if !labels.iter().any(|&y| y) || labels.iter().all(|&y| y) {
        return Err(EnsembleError::DegenerateValidation(
            "validation labels need both classes".into(),
        ));
    }
    Ok(())
}

fn evaluate_point(probas: &[Tensor2], w: &[f64], labels: &[bool], cap: f64) -> GridPoint {
    let p = soft_vote(probas, w).expect("grid weights are valid");
    let scores = p.column(1);
    let m = prf_fpr(confusion(&scores, labels, DECISION_THRESHOLD).expect("lengths checked"));
    GridPoint {
        w: w.to_vec(),
        recall: m.recall,
        fpr: m.fpr,
        f1: m.f1,
        feasible: m.fpr <= cap,
    }
}

/// Exhaustive simplex-grid search for soft-voting weights on validation data.
///
/// Maximizes illicit recall at threshold 0.5 among points with FPR at most
/// `fpr_cap`; if none qualifies, maximizes illicit F1. Ties go to the weights
/// closest to uniform, then to the first point in grid order.
pub fn tune_weights(
    val_probas: &[Tensor2],
    val_labels: &[bool],
    fpr_cap: f64,
    grid_step: f64,
) -> Result<EnsembleWeights, EnsembleError> {
    check_validation(val_probas, val_labels)?;
    let k = val_probas.len();
    let units = grid_units(grid_step)?;
    let grid = simplex_grid(k, units);
    let points: Vec<GridPoint> = grid
        .iter()
        .map(|u| {
            let w: Vec<f64> = u.iter().map(|&x| x as f64 / units as f64).collect();
            evaluate_point(val_probas, &w, val_labels, fpr_cap)
        })
        .collect();
    let any_feasible = points.iter().any(|p| p.feasible);
    let objective = |p: &GridPoint| -> Option<f64> {
        match (any_feasible, p.feasible) {
            (true, true) => Some(p.recall),
            (true, false) => None,
            (false, _) => Some(p.f1),
        }
    };
    // Squared distance from uniform, in exact integer units (scaled by k²).
    let spread = |u: &[usize]| -> u64 {
        u.iter()
            .map(|&x| {
                let d = (x * k) as i64 - units as i64;
                (d * d) as u64
            })
            .sum()
    };
    let mut best: Option<(usize, f64, u64)> = None;
    for (i, p) in points.iter().enumerate() {
        let Some(obj) = objective(p) else { continue };
        let s = spread(&grid[i]);
        let better = match best {
            None => true,
            Some((_, bo, bs)) => obj > bo || (obj == bo && s < bs),
        };
        if better {
            best = Some((i, obj, s));
        }
    }
    let (idx, value, _) = best.expect("grid is non-empty");
    Ok(EnsembleWeights {
        w: points[idx].w.clone(),
        tuning_record: TuningRecord {
            grid_step,
            fpr_cap,
            threshold: DECISION_THRESHOLD,
            objective: if any_feasible {
                TuningObjective::ConstrainedRecall
            } else {
                TuningObjective::F1Fallback
            },
            objective_value: value,
            constraint_satisfied: points[idx].feasible,
            fallback: !any_feasible,
            points,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackerTrace {
    pub iterations: usize,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub converged: bool,
}

/// Logistic regression over the `2k` stacked class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingModel {
    /// `2k` input coefficients followed by the bias.
    pub coefficients: Vec<f64>,
    /// Validation means subtracted from the inputs before the linear score.
    pub center: Vec<f64>,
    pub training_trace: StackerTrace,
}

impl StackingModel {
    pub fn save(&self, path: &Path) -> Result<(), EnsembleError> {
        save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, EnsembleError> {
        load_json(path)
    }

    fn score(&self, x: &[f64]) -> f64 {
        let (coef, bias) = self.coefficients.split_at(self.center.len());
        let z: f64 = x
            .iter()
            .zip(&self.center)
            .zip(coef)
            .map(|((x, c), w)| (x - c) * w)
            .sum::<f64>()
            + bias[0];
        sigmoid(z)
    }
}

pub const STACKER_MAX_ITER: usize = 10_000;
pub const STACKER_TOL: f64 = 1e-6;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn stacked_rows(probas: &[Tensor2]) -> Vec<Vec<f64>> {
    let rows = probas[0].rows();
    (0..rows)
        .map(|r| probas.iter().flat_map(|p| p.row(r).iter().copied()).collect())
        .collect()
}

/// Full-batch gradient descent on mean log-loss from zero coefficients.
/// Inputs are centred on their validation means. The step is `1/L` for the
/// loss's Lipschitz bound `L = max ||x||² / 4`.
pub fn fit_stacker(
    val_probas: &[Tensor2],
    val_labels: &[bool],
) -> Result<StackingModel, EnsembleError> {
    check_validation(val_probas, val_labels)?;
    let mut x = stacked_rows(val_probas);
    let n = x.len() as f64;
    let d = x[0].len();
    let center: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    for r in &mut x {
        for (v, c) in r.iter_mut().zip(&center) {
            *v -= c;
        }
        r.push(1.0);
    }
    let y: Vec<f64> = val_labels.iter().map(|&b| b as u8 as f64).collect();
    let max_sq = x
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let lr = 4.0 / max_sq;
    let mut w = vec![0.0; d + 1];
    let mut trace = StackerTrace {
        iterations: 0,
        final_loss: f64::NAN,
        final_grad_norm: f64::NAN,
        converged: false,
    };
    for it in 0..=STACKER_MAX_ITER {
        let mut grad = vec![0.0; d + 1];
        let mut loss = 0.0;
        for (r, &t) in x.iter().zip(&y) {
            let z: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
            let p = sigmoid(z);
            // log(1 + e^z) - t z, computed without overflow.
            loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
            for (g, a) in grad.iter_mut().zip(r) {
                *g += (p - t) * a / n;
            }
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        trace = StackerTrace {
            iterations: it,
            final_loss: loss / n,
            final_grad_norm: norm,
            converged: norm < STACKER_TOL,
        };
        if trace.converged || it == STACKER_MAX_ITER {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= lr * g;
        }
    }
    Ok(StackingModel {
        coefficients: w,
        center,
        training_trace: trace,
    })
}

/// `[1 - p, p]` rows with `p` the stacker's illicit probability.
pub fn stack_predict(model: &StackingModel, probas: &[Tensor2]) -> Result<Tensor2, EnsembleError> {
    let (rows, _) = check_probas(probas)?;
    if 2 * probas.len() != model.center.len() || model.coefficients.len() != model.center.len() + 1 {
        return Err(EnsembleError::ShapeMismatch(format!(
            "stacker fitted on {} inputs, given {} models",
            model.center.len(),
            probas.len()
        )));
    }
    let mut out = Tensor2::zeros(rows, 2);
    for (r, x) in stacked_rows(probas).iter().enumerate() {
        let p = model.score(x);
        out.set(r, 0, 1.0 - p);
        out.set(r, 1, p);
    }
    Ok(out)
}
