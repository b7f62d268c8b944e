//! Threshold and ranking metrics for the illicit (positive) class.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no positive labels")]
    NoPositives,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// The ROC origin sits at `+inf`, written to JSON as the string `"inf"`.
    #[serde(with = "extended_float")]
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *x {
            f64::INFINITY => "inf".serialize(s),
            f64::NEG_INFINITY => "-inf".serialize(s),
            x => x.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("bad threshold {t:?}"))),
            },
        }
    }
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    match scores.iter().find(|s| !s.is_finite()) {
        Some(&s) => Err(MetricsError::NonFinite(s)),
        None => Ok(()),
    }
}

/// Predicted positive iff `score >= threshold`.
pub fn confusion(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ConfusionCounts, MetricsError> {
    check(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    /// No positive predictions; precision reported as 0.
    pub precision_undefined: bool,
}

pub fn prf_fpr(c: ConfusionCounts) -> Prf {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
        fpr: ratio(c.fp, c.fp + c.tn),
        precision_undefined: c.tp + c.fp == 0,
    }
}

/// Indices sorted by descending score, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Runs of equal score in a ranking, as `(score, positives, negatives)`.
fn tie_groups(scores: &[f64], labels: &[bool], order: &[usize]) -> Vec<(f64, usize, usize)> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &i in order {
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                if labels[i] {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((scores[i], labels[i] as usize, !labels[i] as usize)),
        }
    }
    groups
}

/// Precision/recall points at each distinct score threshold, descending.
/// `x` is recall, `y` precision.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<CurvePoint>, MetricsError> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let (mut tp, mut fp) = (0, 0);
    Ok(tie_groups(scores, labels, &ranking(scores))
        .into_iter()
        .map(|(t, p, n)| {
            tp += p;
            fp += n;
            CurvePoint {
                threshold: t,
                x: tp as f64 / pos as f64,
                y: tp as f64 / (tp + fp) as f64,
            }
        })
        .collect())
}

/// Average precision: `Σ (R_k - R_{k-1}) P_k` over descending distinct
/// thresholds.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for pt in pr_curve(scores, labels)? {
        ap += (pt.x - prev_recall) * pt.y;
        prev_recall = pt.x;
    }
    Ok(ap)
}

/// ROC points at each distinct threshold, starting from `(0, 0)`. `x` is FPR,
/// `y` TPR.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<CurvePoint>, MetricsError> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut pts = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    let (mut tp, mut fp) = (0, 0);
    for (t, p, n) in tie_groups(scores, labels, &ranking(scores)) {
        tp += p;
        fp += n;
        pts.push(CurvePoint {
            threshold: t,
            x: fp as f64 / neg as f64,
            y: tp as f64 / pos as f64,
        });
    }
    Ok(pts)
}

/// Mann-Whitney form: `P(s_pos > s_neg) + P(s_pos = s_neg) / 2`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    // Walk groups from highest score down; each positive beats every
    // negative not yet seen and ties with the negatives in its own group.
    let mut neg_above = 0usize;
    let mut wins = 0.0;
    for (_, p, n) in tie_groups(scores, labels, &ranking(scores)) {
        let below = neg - neg_above - n;
        wins += p as f64 * (below as f64 + 0.5 * n as f64);
        neg_above += n;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Recall within the top `k` ranked nodes against `k / n`, for `k = 1..=n`.
pub fn recall_vs_reviewed(
    scores: &[f64],
    labels: &[bool],
) -> Result<Vec<CurvePoint>, MetricsError> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let n = scores.len() as f64;
    let mut tp = 0;
    Ok(ranking(scores)
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            tp += labels[i] as usize;
            CurvePoint {
                threshold: scores[i],
                x: (k + 1) as f64 / n,
                y: tp as f64 / pos as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub threshold: f64,
    pub confusion: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub precision_undefined: bool,
    pub pr_auc: f64,
    pub roc_auc: f64,
}

pub fn summarize(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<MetricSummary, MetricsError> {
    let confusion = confusion(scores, labels, threshold)?;
    let prf = prf_fpr(confusion);
    Ok(MetricSummary {
        threshold,
        confusion,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        fpr: prf.fpr,
        precision_undefined: prf.precision_undefined,
        pr_auc: pr_auc(scores, labels)?,
        roc_auc: roc_auc(scores, labels)?,
    })
}

pub fn write_curve_csv(path: &Path, points: &[CurvePoint]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "threshold,x,y")?;
    for p in points {
        writeln!(w, "{},{},{}", p.threshold, p.x, p.y)?;
    }
    w.flush()
}
