//! Acceptance criteria. Each criterion prints one `[PASS]`/`[FAIL]` line (or
//! `[SKIP]` for the optional real-data check); the test fails if any gating
//! criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gnnguard_core::ensemble::{soft_vote, tune_weights};
use gnnguard_core::gnn::{
    class_weights, init_params, logits, loss_and_gradients, loss_targets, train,
    weighted_cross_entropy, Activation, Backbone, ClassWeights, GraphOperators, ModelConfig,
    Target, TrainedModel,
};
use gnnguard_core::graph::{IngestConfig, Label, TransactionGraph};
use gnnguard_core::metrics::{pr_auc, roc_auc};
use gnnguard_core::pipeline::{self, DataSource, Report, RunConfig, SplitSelection, TUNED_VOTE};
use gnnguard_core::quantum::{
    amplitude_encode, angle_encode, apply_circuit, Axis, CircuitSpec, Gate, QuantumLayer,
    QuantumLayerConfig, StateVector,
};
use gnnguard_core::split::{
    chronological_split, stratified_split, window_bounds, Part, SplitAssignment, SplitMode,
    DEFAULT_RATIOS,
};
use gnnguard_core::synth::SyntheticSpec;
use gnnguard_core::{RandomSource, Tensor2};
use num_complex::Complex64;

type Outcome = Result<String, String>;

fn report_line(status: &str, id: &str, title: &str, detail: &str) {
    // Written straight to stderr so the line survives test output capture.
    let _ = writeln!(std::io::stderr(), "[{status}] criterion {id} {title}: {detail}");
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uniform(rng: &mut RandomSource) -> f64 {
    rng.uniform().unwrap()
}

fn below(rng: &mut RandomSource, n: usize) -> usize {
    rng.below(n).unwrap()
}

fn normal(rng: &mut RandomSource) -> f64 {
    rng.normal().unwrap()
}

/// Random causal graph with random labels. Every class gets at least
/// `min_per_class` labeled nodes.
fn random_graph(
    rng: &mut RandomSource,
    n: usize,
    steps: u32,
    edge_prob: f64,
    dim: usize,
    illicit_p: f64,
    unknown_p: f64,
    min_per_class: usize,
) -> TransactionGraph {
    let time_steps: Vec<u32> = (0..n).map(|_| 1 + below(rng, steps as usize) as u32).collect();
    let mut labels: Vec<Label> = (0..n)
        .map(|_| {
            let u = uniform(rng);
            if u < unknown_p {
                Label::Unknown
            } else if u < unknown_p + (1.0 - unknown_p) * illicit_p {
                Label::Illicit
            } else {
                Label::Licit
            }
        })
        .collect();
    for (k, class) in [Label::Licit, Label::Illicit].into_iter().enumerate() {
        let have = labels.iter().filter(|&&l| l == class).count();
        let mut i = k;
        let mut missing = min_per_class.saturating_sub(have);
        while missing > 0 {
            if labels[i] != class && labels[i] != [Label::Licit, Label::Illicit][1 - k] {
                labels[i] = class;
                missing -= 1;
            } else if labels[i] != class
                && labels.iter().filter(|&&l| l == labels[i]).count() > min_per_class
            {
                labels[i] = class;
                missing -= 1;
            }
            i = (i + 1) % n;
        }
    }
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if time_steps[s] < time_steps[d] && uniform(rng) < edge_prob {
                edges.push((s, d));
            }
        }
    }
    let features = Tensor2::from_vec(n, dim, (0..n * dim).map(|_| normal(rng)).collect());
    TransactionGraph::from_parts(
        (0..n).map(|i| format!("n{i}")).collect(),
        time_steps,
        labels,
        features,
        &edges,
    )
    .unwrap()
}

// ---------------------------------------------------------------- criterion 1

const FD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
/// Floor on the denominator of the relative error, so entries whose true
/// gradient is ~0 are judged by absolute error instead.
const REL_FLOOR: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

#[derive(Default)]
struct GradStats {
    max_rel: f64,
    checked: usize,
    kinks: usize,
}

impl GradStats {
    /// Compares one analytic entry against central differences. A mismatch
    /// where the analytic value agrees with one of the one-sided differences
    /// is a ReLU kink inside the stencil, counted separately.
    fn record(&mut self, analytic: f64, f: impl Fn(f64) -> f64) -> Result<(), String> {
        let (fp, f0, fm) = (f(FD_STEP), f(0.0), f(-FD_STEP));
        let central = (fp - fm) / (2.0 * FD_STEP);
        let e = rel_err(analytic, central);
        self.checked += 1;
        if e < GRAD_TOL {
            self.max_rel = self.max_rel.max(e);
            return Ok(());
        }
        let forward = (fp - f0) / FD_STEP;
        let backward = (f0 - fm) / FD_STEP;
        if rel_err(analytic, forward).min(rel_err(analytic, backward)) < 1e-3
            && rel_err(forward, backward) > 1e-2
        {
            self.kinks += 1;
            return Ok(());
        }
        Err(format!("analytic {analytic:e} vs central {central:e} (rel {e:e})"))
    }
}

fn random_targets(
    rng: &mut RandomSource,
    graph: &TransactionGraph,
) -> (Vec<Option<usize>>, Vec<bool>, ClassWeights) {
    let labels = graph.class_targets();
    loop {
        let mask: Vec<bool> = (0..graph.node_count()).map(|_| uniform(rng) < 0.8).collect();
        if let Ok(w) = class_weights(&labels, &mask, 2) {
            return (labels, mask, w);
        }
    }
}

fn gnn_grad_trial(rng: &mut RandomSource, backbone: Backbone, stats: &mut GradStats) -> Result<(), String> {
    let n = 5 + below(rng, 16);
    let dim = 2 + below(rng, 4);
    let graph = random_graph(rng, n, 4, 0.25, dim, 0.4, 0.2, 2);
    let ops = GraphOperators::new(&graph);
    let mut config = ModelConfig::new(backbone, dim);
    config.layer_dims = if uniform(rng) < 0.3 {
        vec![dim, 2 + below(rng, 4), 2 + below(rng, 4), 2]
    } else {
        vec![dim, 2 + below(rng, 5), 2]
    };
    config.activation = if uniform(rng) < 0.5 { Activation::Relu } else { Activation::LeakyRelu };
    config.attention_heads = 1 + below(rng, 2);
    config.gin_epsilon = uniform(rng) - 0.5;
    let mut params = init_params(&config, rng).unwrap();
    for p in &mut params {
        for x in p.data_mut() {
            *x = 0.7 * normal(rng);
        }
    }
    let (labels, mask, weights) = random_targets(rng, &graph);
    let targets: Arc<Vec<Target>> = Arc::new(loss_targets(&labels, &mask, &weights));
    let (_, grads, _) = loss_and_gradients(&config, &ops, graph.features(), &params, &targets).unwrap();
    let x = graph.features();
    for k in 0..params.len() {
        for e in 0..params[k].data().len() {
            let loss_at = |d: f64| {
                let mut p = params.clone();
                p[k].data_mut()[e] += d;
                let z = logits(&config, &ops, x, &p).unwrap();
                weighted_cross_entropy(&z, &labels, &weights, &mask).unwrap().0
            };
            stats
                .record(grads[k].data()[e], loss_at)
                .map_err(|m| format!("{} param {k}[{e}]: {m}", backbone.as_str()))?;
        }
    }
    Ok(())
}

fn ce_grad_trial(rng: &mut RandomSource, stats: &mut GradStats) -> Result<(), String> {
    let n = 2 + below(rng, 19);
    let c = 2 + below(rng, 3);
    let z = Tensor2::from_vec(n, c, (0..n * c).map(|_| 3.0 * normal(rng)).collect());
    let labels: Vec<Option<usize>> = (0..n)
        .map(|i| if i < c || uniform(rng) < 0.8 { Some(i % c) } else { None })
        .collect();
    let mask: Vec<bool> = (0..n).map(|i| i < c || uniform(rng) < 0.8).collect();
    let weights = ClassWeights { w: (0..c).map(|_| 0.1 + 3.0 * uniform(rng)).collect() };
    let (_, grad) = weighted_cross_entropy(&z, &labels, &weights, &mask).unwrap();
    for e in 0..n * c {
        let loss_at = |d: f64| {
            let mut zz = z.clone();
            zz.data_mut()[e] += d;
            weighted_cross_entropy(&zz, &labels, &weights, &mask).unwrap().0
        };
        stats.record(grad.data()[e], loss_at).map_err(|m| format!("ce logit {e}: {m}"))?;
    }
    Ok(())
}

fn quantum_grad_trial(rng: &mut RandomSource, stats: &mut GradStats) -> Result<(), String> {
    let n = 2 + below(rng, 19);
    let config = QuantumLayerConfig { n_qubits: 1 + below(rng, 4), depth: 1 + below(rng, 3) };
    let graph = random_graph(rng, n, 4, 0.3, 1, 0.4, 0.2, 0);
    let h = Tensor2::from_vec(
        n,
        config.n_qubits,
        (0..n * config.n_qubits).map(|_| PI * uniform(rng)).collect(),
    );
    let upstream = Tensor2::from_vec(
        n,
        config.n_qubits,
        (0..n * config.n_qubits).map(|_| normal(rng)).collect(),
    );
    let layer = QuantumLayer::init(config, rng).unwrap();
    let grad = layer.param_gradient(&graph, &h, &upstream).unwrap();
    for k in 0..grad.len() {
        let objective = |d: f64| {
            let mut p = layer.params.clone();
            p[k] += d;
            let out = QuantumLayer::new(config, p).unwrap().forward(&graph, &h).unwrap();
            out.values.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
        };
        stats.record(grad[k], objective).map_err(|m| format!("quantum param {k}: {m}"))?;
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = RandomSource::seeded(101);
    let mut parts = Vec::new();
    let mut total_kinks = 0;
    for backbone in Backbone::ALL {
        let mut s = GradStats::default();
        for _ in 0..50 {
            gnn_grad_trial(&mut rng, backbone, &mut s)?;
        }
        parts.push(format!("{} {:.1e}", backbone.as_str(), s.max_rel));
        total_kinks += s.kinks;
    }
    let mut s = GradStats::default();
    for _ in 0..50 {
        ce_grad_trial(&mut rng, &mut s)?;
    }
    parts.push(format!("ce {:.1e}", s.max_rel));
    let mut q = GradStats::default();
    for _ in 0..50 {
        quantum_grad_trial(&mut rng, &mut q)?;
    }
    parts.push(format!("quantum {:.1e}", q.max_rel));
    let secs = t.elapsed().as_secs_f64();
    check(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "max rel err {} (tol {GRAD_TOL:e}, 50 trials each, <= 20 nodes); {total_kinks} ReLU-kink entries; {secs:.1}s",
        parts.join(", ")
    ))
}

// ---------------------------------------------------------------- criterion 2

fn oracle_roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        if !yi {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Average precision by enumerating every distinct threshold, high to low,
/// and recounting the confusion matrix at each.
fn oracle_pr_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, &y) in scores.iter().zip(labels) {
            if *s >= t {
                if y {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = RandomSource::seeded(202);
    let (mut max_pr, mut max_roc) = (0.0f64, 0.0f64);
    for trial in 0..200 {
        let n = 2 + below(&mut rng, 499);
        let levels = [0usize, 5, 20, 1000][trial % 4];
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let u = uniform(&mut rng);
                if levels == 0 { u } else { (u * levels as f64).floor() / levels as f64 }
            })
            .collect();
        let rate = 0.02 + 0.5 * uniform(&mut rng);
        let mut labels: Vec<bool> = (0..n).map(|_| uniform(&mut rng) < rate).collect();
        labels[0] = true;
        labels[1] = false;
        let pr = pr_auc(&scores, &labels).map_err(|e| e.to_string())?;
        let roc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        max_pr = max_pr.max((pr - oracle_pr_auc(&scores, &labels)).abs());
        max_roc = max_roc.max((roc - oracle_roc_auc(&scores, &labels)).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    check(max_pr <= 1e-9 && max_roc <= 1e-9, || {
        format!("max |diff| PR {max_pr:e}, ROC {max_roc:e}")
    })?;
    check(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "200 vectors (n <= 500, with ties): max |PR-AUC - oracle| {max_pr:.1e}, max |ROC-AUC - oracle| {max_roc:.1e}; {secs:.1}s"
    ))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let mut rng = RandomSource::seeded(303);
    let mut worst_dev = 0.0f64;
    let mut chrono_graphs = 0;
    let mut pairs_scanned = 0usize;
    for trial in 0..100 {
        let n = 30 + below(&mut rng, 271);
        let steps = 3 + below(&mut rng, 47) as u32;
        let (illicit_p, unknown_p) = (0.05 + 0.45 * uniform(&mut rng), 0.5 * uniform(&mut rng));
        let g = random_graph(&mut rng, n, steps, 0.0, 1, illicit_p, unknown_p, 3);
        let ratios = if trial % 2 == 0 {
            DEFAULT_RATIOS
        } else {
            let raw = [0.2 + uniform(&mut rng), 0.2 + uniform(&mut rng), 0.2 + uniform(&mut rng)];
            let s: f64 = raw.iter().sum();
            let mut r = raw.map(|x| x / s);
            r[2] = 1.0 - r[0] - r[1];
            r
        };
        let split = stratified_split(&g, ratios, &mut rng).map_err(|e| e.to_string())?;
        for class in [Label::Licit, Label::Illicit] {
            let members: Vec<usize> = (0..n).filter(|&v| g.labels()[v] == class).collect();
            for (p, part) in [Part::Train, Part::Val, Part::Test].into_iter().enumerate() {
                let count = members.iter().filter(|&&v| split.assignment[v] == part).count();
                let dev = (count as f64 - ratios[p] * members.len() as f64).abs();
                worst_dev = worst_dev.max(dev);
            }
        }
        for v in 0..n {
            let labeled = g.labels()[v].is_labeled();
            check(labeled == (split.assignment[v] != Part::Excluded), || format!("node {v} misassigned"))?;
        }

        let (alpha, beta) = (0.5 + 0.3 * uniform(&mut rng), 0.0);
        let beta = if beta == 0.0 { alpha + (1.0 - alpha) * (0.2 + 0.6 * uniform(&mut rng)) } else { beta };
        let Ok(chrono) = chronological_split(&g, alpha, beta) else { continue };
        chrono_graphs += 1;
        let (ta, tb) = window_bounds(g.max_time_step(), alpha, beta);
        let ts = g.time_steps();
        let of = |p: Part| chrono.indices(p);
        let (train, val, test) = (of(Part::Train), of(Part::Val), of(Part::Test));
        for (early, late) in [(&train, &val), (&train, &test), (&val, &test)] {
            for &u in early.iter() {
                for &v in late.iter() {
                    pairs_scanned += 1;
                    check(ts[u] < ts[v], || format!("time violation {u}@{} vs {v}@{}", ts[u], ts[v]))?;
                }
            }
        }
        for v in 0..n {
            let want = if !g.labels()[v].is_labeled() {
                Part::Excluded
            } else if ts[v] <= ta {
                Part::Train
            } else if ts[v] <= tb {
                Part::Val
            } else {
                Part::Test
            };
            check(chrono.assignment[v] == want, || format!("node {v} at step {} in wrong window", ts[v]))?;
        }
    }
    check(worst_dev <= 1.0, || format!("stratification deviation {worst_dev}"))?;
    check(chrono_graphs >= 50, || format!("only {chrono_graphs} chronological splits were possible"))?;
    Ok(format!(
        "100 graphs: max per-class quota deviation {worst_dev:.3} nodes; {chrono_graphs} chronological splits, {pairs_scanned} ordered pairs scanned, 0 violations"
    ))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    let mut rng = RandomSource::seeded(404);
    let mut max_ce = 0.0f64;
    for _ in 0..200 {
        let n = 1 + below(&mut rng, 300);
        let c = 2 + below(&mut rng, 4);
        let z = Tensor2::from_vec(n, c, (0..n * c).map(|_| 4.0 * normal(&mut rng)).collect());
        let labels: Vec<Option<usize>> = (0..n).map(|_| Some(below(&mut rng, c))).collect();
        let mask: Vec<bool> = (0..n).map(|i| i == 0 || uniform(&mut rng) < 0.7).collect();
        let uniform_w = ClassWeights { w: vec![1.0; c] };
        let (loss, _) = weighted_cross_entropy(&z, &labels, &uniform_w, &mask).map_err(|e| e.to_string())?;
        let mut oracle = 0.0;
        for r in 0..n {
            if !mask[r] {
                continue;
            }
            let row = z.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            oracle += lse - row[labels[r].unwrap()];
        }
        max_ce = max_ce.max((loss - oracle).abs());
    }
    let (mut max_dev, mut exact, trials) = (0.0f64, 0, 1000);
    for _ in 0..trials {
        let n = 2 + below(&mut rng, 5000);
        let c = 2 + below(&mut rng, 3);
        let targets: Vec<Option<usize>> = (0..n)
            .map(|i| if i < c { Some(i) } else if uniform(&mut rng) < 0.2 { None } else { Some(below(&mut rng, c)) })
            .collect();
        let mask = vec![true; n];
        let w = class_weights(&targets, &mask, c).map_err(|e| e.to_string())?;
        let mut counts = vec![0usize; c];
        for t in targets.iter().flatten() {
            counts[*t] += 1;
        }
        let total: usize = counts.iter().sum();
        let sum: f64 = w.w.iter().zip(&counts).map(|(w, &nc)| w * nc as f64).sum();
        let dev = (sum - total as f64).abs() / total as f64;
        max_dev = max_dev.max(dev);
        exact += (sum == total as f64) as usize;
    }
    check(max_ce <= 1e-9, || format!("uniform CE differs by {max_ce:e}"))?;
    check(max_dev <= 4.0 * f64::EPSILON, || format!("sum w_c N_c off by {max_dev:e} relative"))?;
    Ok(format!(
        "uniform-weight CE vs unweighted oracle max |diff| {max_ce:.1e}; sum w_c N_c = N bit-exact in {exact}/{trials} trials, max relative deviation {max_dev:.1e} (<= 4 ulp)"
    ))
}

// ---------------------------------------------------------------- criterion 5

fn random_probas(rng: &mut RandomSource, n: usize, labels: &[bool], skill: f64) -> Tensor2 {
    let data = (0..n)
        .flat_map(|i| {
            let p = (uniform(rng) + if labels[i] { skill } else { 0.0 }).min(1.0) / (1.0 + skill).max(1.0);
            [1.0 - p, p]
        })
        .collect();
    Tensor2::from_vec(n, 2, data)
}

fn criterion_5() -> Outcome {
    let mut rng = RandomSource::seeded(505);
    let mut max_unit = 0.0f64;
    let mut instances = 0;
    let mut fallbacks = 0;
    for trial in 0..100 {
        let k = 1 + below(&mut rng, 3);
        let n = 20 + below(&mut rng, 300);
        let mut labels: Vec<bool> = (0..n).map(|_| uniform(&mut rng) < 0.15).collect();
        labels[0] = true;
        labels[1] = false;
        let probas: Vec<Tensor2> = (0..k)
            .map(|_| {
                let skill = uniform(&mut rng);
                random_probas(&mut rng, n, &labels, skill)
            })
            .collect();
        for i in 0..k {
            let mut w = vec![0.0; k];
            w[i] = 1.0;
            let out = soft_vote(&probas, &w).map_err(|e| e.to_string())?;
            max_unit = max_unit.max(out.max_abs_diff(&probas[i]));
        }

        let cap = [0.0, 0.01, 0.05, 0.2][trial % 4];
        let step = [0.05, 0.1, 0.25][trial % 3];
        let tuned = tune_weights(&probas, &labels, cap, step).map_err(|e| e.to_string())?;
        instances += 1;
        fallbacks += tuned.tuning_record.fallback as usize;

        // Independent enumeration of the simplex grid.
        let units = (1.0 / step).round() as usize;
        let mut grid: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..k {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    let used: usize = prefix.iter().sum();
                    (0..=units - used).map(move |u| {
                        let mut p = prefix.clone();
                        p.push(u);
                        p
                    })
                })
                .collect();
        }
        grid.retain(|u| u.iter().sum::<usize>() == units);
        check(grid.len() == tuned.tuning_record.points.len(), || {
            format!("record has {} points, grid has {}", tuned.tuning_record.points.len(), grid.len())
        })?;
        let mut evaluated = Vec::new();
        for u in &grid {
            let w: Vec<f64> = u.iter().map(|&x| x as f64 / units as f64).collect();
            let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
            for (r, &y) in labels.iter().enumerate() {
                let mut p = 0.0;
                for (m, wi) in w.iter().enumerate() {
                    if *wi != 0.0 {
                        p += wi * probas[m].get(r, 1);
                    }
                }
                match (p >= 0.5, y) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, false) => tn += 1.0,
                    (false, true) => fn_ += 1.0,
                }
            }
            let recall = tp / (tp + fn_);
            let fpr = fp / (fp + tn);
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            let spread: f64 = w.iter().map(|x| (x - 1.0 / k as f64).powi(2)).sum();
            evaluated.push((w, recall, fpr <= cap, f1, spread));
        }
        let any_feasible = evaluated.iter().any(|e| e.2);
        let objective = |e: &(Vec<f64>, f64, bool, f64, f64)| -> Option<f64> {
            if any_feasible {
                e.2.then_some(e.1)
            } else {
                Some(e.3)
            }
        };
        let best = evaluated.iter().filter_map(objective).fold(f64::NEG_INFINITY, f64::max);
        let chosen = evaluated
            .iter()
            .find(|e| e.0 == tuned.w)
            .ok_or_else(|| format!("tuned weights {:?} are not a grid point", tuned.w))?;
        check(objective(chosen) == Some(best), || {
            format!("tuned objective {:?}, optimum {best}", objective(chosen))
        })?;
        let min_spread = evaluated
            .iter()
            .filter(|e| objective(e) == Some(best))
            .map(|e| e.4)
            .fold(f64::INFINITY, f64::min);
        check(chosen.4 <= min_spread + 1e-12, || "tie not broken towards uniform weights".into())?;
        check(tuned.tuning_record.fallback == !any_feasible, || "fallback flag wrong".into())?;
    }
    check(max_unit <= 1e-12, || format!("unit weights differ by {max_unit:e}"))?;
    Ok(format!(
        "w = e_i max |diff| {max_unit:.1e}; {instances} tuning instances re-enumerated, tuned point optimal in all ({fallbacks} used the F1 fallback)"
    ))
}

// ---------------------------------------------------------------- criterion 6

fn gate_matrix(g: &Gate) -> Option<[Complex64; 4]> {
    let Gate::Rotation { axis, angle, .. } = *g else { return None };
    let (s, c) = (angle / 2.0).sin_cos();
    let r = |x: f64| Complex64::new(x, 0.0);
    let i = |x: f64| Complex64::new(0.0, x);
    Some(match axis {
        Axis::X => [r(c), i(-s), i(-s), r(c)],
        Axis::Y => [r(c), r(-s), r(s), r(c)],
        Axis::Z => [Complex64::new(c, -s), r(0.0), r(0.0), Complex64::new(c, s)],
    })
}

/// Full `2^n x 2^n` unitary of one gate; qubit `q` is bit `q` of the index.
fn dense_gate(g: &Gate, n: usize) -> Vec<Complex64> {
    let dim = 1 << n;
    let mut u = vec![Complex64::new(0.0, 0.0); dim * dim];
    match *g {
        Gate::Rotation { qubit, .. } => {
            let m = gate_matrix(g).unwrap();
            for row in 0..dim {
                for col in 0..dim {
                    if row & !(1 << qubit) == col & !(1 << qubit) {
                        let (a, b) = (row >> qubit & 1, col >> qubit & 1);
                        u[row * dim + col] = m[2 * a + b];
                    }
                }
            }
        }
        Gate::Cnot { control, target } => {
            for col in 0..dim {
                let row = if col >> control & 1 == 1 { col ^ (1 << target) } else { col };
                u[row * dim + col] = Complex64::new(1.0, 0.0);
            }
        }
    }
    u
}

fn matmul(a: &[Complex64], b: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

fn random_circuit(rng: &mut RandomSource, n: usize, len: usize) -> CircuitSpec {
    let gates = (0..len)
        .map(|_| {
            if n > 1 && uniform(rng) < 0.3 {
                let control = below(rng, n);
                let target = (control + 1 + below(rng, n - 1)) % n;
                Gate::Cnot { control, target }
            } else {
                Gate::Rotation {
                    axis: [Axis::X, Axis::Y, Axis::Z][below(rng, 3)],
                    qubit: below(rng, n),
                    angle: 4.0 * PI * (uniform(rng) - 0.5),
                }
            }
        })
        .collect();
    CircuitSpec::new(gates)
}

fn small_run_config(dir: &Path) -> RunConfig {
    let mut config = RunConfig {
        data: DataSource::Synthetic(SyntheticSpec {
            node_count: 400,
            time_steps: 20,
            illicit_fraction: 0.1,
            seed: 6,
            ..SyntheticSpec::default()
        }),
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    config.split.mode = SplitSelection::Stratified;
    for m in &mut config.models {
        m.hidden_dims = vec![16];
        m.max_epochs = 30;
    }
    config
}

fn criterion_6() -> Outcome {
    let mut rng = RandomSource::seeded(606);
    let mut max_norm = 0.0f64;
    let mut z_out = 0usize;
    for i in 0..1000 {
        let n = 1 + below(&mut rng, 8);
        let state = if i % 2 == 0 {
            let x: Vec<f64> = (0..1 + below(&mut rng, n)).map(|_| 2.0 * PI * uniform(&mut rng)).collect();
            angle_encode(&x, n)
        } else {
            let x: Vec<f64> = (0..(1usize << n)).map(|_| normal(&mut rng)).collect();
            amplitude_encode(&x)
        }
        .map_err(|e| e.to_string())?;
        let len = 1 + below(&mut rng, 40);
        let out = apply_circuit(state, &random_circuit(&mut rng, n, len)).map_err(|e| e.to_string())?;
        max_norm = max_norm.max((out.norm_sqr().sqrt() - 1.0).abs());
        z_out += out.expect_z().iter().filter(|z| !(-1.0..=1.0).contains(*z)).count();
    }
    let mut max_dense = 0.0f64;
    for n in 1..=8usize {
        let dim = 1 << n;
        for _ in 0..if n == 8 { 2 } else { 4 } {
            let circuit = random_circuit(&mut rng, n, 4 + 2 * n);
            let amps: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(normal(&mut rng), normal(&mut rng)))
                .collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let amps: Vec<Complex64> = amps.iter().map(|a| a / norm).collect();
            let state = StateVector::from_amplitudes(amps.clone()).map_err(|e| e.to_string())?;
            let fast = apply_circuit(state, &circuit).map_err(|e| e.to_string())?;
            let mut u = dense_gate(&Gate::Rotation { axis: Axis::Z, qubit: 0, angle: 0.0 }, n);
            for g in &circuit.gates {
                u = matmul(&dense_gate(g, n), &u, dim);
            }
            for (row, got) in fast.amplitudes().iter().enumerate() {
                let want: Complex64 = (0..dim).map(|c| u[row * dim + c] * amps[c]).sum();
                max_dense = max_dense.max((got - want).norm());
            }
        }
    }

    // Hooks off: pipeline outputs match the classical path and ignore the
    // quantum layer's settings.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = small_run_config(&dir.path().join("a"));
    let a = pipeline::run_all(&base).map_err(|e| e.to_string())?;
    let mut other = small_run_config(&dir.path().join("b"));
    other.quantum.layer = QuantumLayerConfig { n_qubits: 6, depth: 3 };
    let b = pipeline::run_all(&other).map_err(|e| e.to_string())?;
    let same_outputs = serde_json::to_string(&a.splits).unwrap() == serde_json::to_string(&b.splits).unwrap();
    let graph = IngestConfig::for_bundle(&dir.path().join("a/data"), None)
        .ingest()
        .map_err(|e| e.to_string())?
        .0;
    let split = SplitAssignment {
        assignment: SplitAssignment::read_parts(&dir.path().join("a/stratified/split.csv")).map_err(|e| e.to_string())?,
        mode: SplitMode::Stratified,
        ratios: base.split.ratios,
        alpha_beta: None,
    };
    let mut classical_match = true;
    for m in &base.models {
        let stored = TrainedModel::load(&dir.path().join(format!("a/stratified/models/{}.json", m.backbone.as_str())))
            .map_err(|e| e.to_string())?;
        let direct = train(&graph, graph.features(), &split, &stored.config).map_err(|e| e.to_string())?;
        let bits = |ps: &[Tensor2]| ps.iter().flat_map(|p| p.data().iter().map(|x| x.to_bits())).collect::<Vec<_>>();
        classical_match &= bits(&direct.params) == bits(&stored.params) && direct.train_trace == stored.train_trace;
    }
    let mut on = small_run_config(&dir.path().join("c"));
    on.quantum.enabled = true;
    let c = pipeline::run_all(&on).map_err(|e| e.to_string())?;
    let hook_changes_outputs = serde_json::to_string(&a.splits).unwrap() != serde_json::to_string(&c.splits).unwrap();

    check(max_norm <= 1e-12, || format!("norm drift {max_norm:e}"))?;
    check(max_dense <= 1e-10, || format!("dense oracle diff {max_dense:e}"))?;
    check(z_out == 0, || format!("{z_out} Z expectations outside [-1, 1]"))?;
    check(same_outputs, || "disabled hook settings changed outputs".into())?;
    check(classical_match, || "hooks-off pipeline differs from direct classical training".into())?;
    Ok(format!(
        "norm drift {max_norm:.1e} over 1000 encode+circuit runs; dense-unitary diff {max_dense:.1e} (n <= 8); Z in [-1, 1]; hooks off bit-identical to classical training (hook on changes outputs: {hook_changes_outputs})"
    ))
}

// ---------------------------------------------------------------- criteria 7, 9

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 }
}

fn desk_config(seed: u64, dir: &Path) -> RunConfig {
    RunConfig {
        data: DataSource::Synthetic(SyntheticSpec { seed, ..SyntheticSpec::default() }),
        seed,
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

fn metric(report: &Report, mode: SplitMode, system: &str, f: fn(&gnnguard_core::metrics::MetricSummary) -> f64) -> f64 {
    f(&report.split(mode).unwrap().system(system).unwrap().metrics)
}

fn criterion_7(root: &Path) -> Outcome {
    let t = Instant::now();
    let mut reports = Vec::new();
    for seed in 0..5 {
        reports.push(pipeline::run_all(&desk_config(seed, &root.join(format!("seed{seed}")))).map_err(|e| e.to_string())?);
    }
    let secs = t.elapsed().as_secs_f64();
    let med = |mode: SplitMode, system: &str, f: fn(&gnnguard_core::metrics::MetricSummary) -> f64| {
        median(reports.iter().map(|r| metric(r, mode, system, f)).collect())
    };
    let f1 = |m: &gnnguard_core::metrics::MetricSummary| m.f1;
    let recall = |m: &gnnguard_core::metrics::MetricSummary| m.recall;
    let backbone_medians: Vec<(Backbone, f64)> =
        Backbone::ALL.iter().map(|&b| (b, med(SplitMode::Stratified, b.as_str(), f1))).collect();
    let (best_b, best) = backbone_medians
        .iter()
        .cloned()
        .fold((Backbone::Gcn, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let tuned = med(SplitMode::Stratified, TUNED_VOTE, f1);
    let stacking = med(SplitMode::Stratified, pipeline::STACKING, f1);
    let rec_strat = med(SplitMode::Stratified, TUNED_VOTE, recall);
    let rec_chrono = med(SplitMode::Chronological, TUNED_VOTE, recall);
    let detail = format!(
        "median illicit F1 (stratified): {}, tuned vote {tuned:.3}, stacking {stacking:.3} vs best backbone {} {best:.3} - 0.02; tuned-vote recall chronological {rec_chrono:.3} vs stratified {rec_strat:.3} + 0.05; 5 seeds in {secs:.1}s",
        backbone_medians.iter().map(|(b, v)| format!("{} {v:.3}", b.as_str())).collect::<Vec<_>>().join(", "),
        best_b.as_str(),
    );
    check(tuned >= best - 0.02, || detail.clone())?;
    check(rec_chrono <= rec_strat + 0.05, || detail.clone())?;
    check(secs < 300.0, || detail.clone())?;
    Ok(detail)
}

fn criterion_9(root: &Path) -> Outcome {
    let first = root.join("seed0");
    let again = root.join("seed0-again");
    pipeline::run_all(&desk_config(0, &again)).map_err(|e| e.to_string())?;
    let mut files = vec![PathBuf::from("report.json")];
    for mode in ["stratified", "chronological"] {
        for entry in fs::read_dir(first.join(mode).join("curves")).map_err(|e| e.to_string())? {
            files.push(Path::new(mode).join("curves").join(entry.map_err(|e| e.to_string())?.file_name()));
        }
    }
    for f in &files {
        let a = fs::read(first.join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(again.join(f)).map_err(|e| e.to_string())?;
        check(a == b, || format!("{} differs between runs", f.display()))?;
    }
    Ok(format!("report.json and {} curve CSVs byte-identical across two runs", files.len() - 1))
}

// ---------------------------------------------------------------- criterion 8

/// Looks for the public Elliptic release in `$GNNGUARD_ELLIPTIC_DIR` or
/// `data/elliptic` at the workspace root.
fn elliptic_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("GNNGUARD_ELLIPTIC_DIR").map(PathBuf::from),
        Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/elliptic")),
    ];
    candidates.into_iter().flatten().find(|d| {
        ["elliptic_txs_features.csv", "elliptic_txs_edgelist.csv", "elliptic_txs_classes.csv"]
            .iter()
            .all(|f| d.join(f).exists())
    })
}

fn criterion_8(root: &Path) -> Option<String> {
    let dir = elliptic_dir()?;
    let ingest = IngestConfig {
        features_path: dir.join("elliptic_txs_features.csv"),
        edges_path: dir.join("elliptic_txs_edgelist.csv"),
        classes_path: dir.join("elliptic_txs_classes.csv"),
        feature_dim: None,
        edges_header: true,
        ..IngestConfig::default()
    };
    let mut config = RunConfig {
        data: DataSource::Files(ingest),
        output_dir: root.join("elliptic"),
        ..RunConfig::default()
    };
    config.split.mode = SplitSelection::Stratified;
    let report = match pipeline::run_all(&config) {
        Ok(r) => r,
        Err(e) => return Some(format!("run failed: {e}")),
    };
    let m = |s: &str| report.split(SplitMode::Stratified).unwrap().system(s).unwrap().metrics.clone();
    let (gcn, gat, gin, tuned) = (m("gcn").f1, m("gat").f1, m("gin").f1, m(TUNED_VOTE));
    let ordering = gat < gcn && gcn < gin && gin <= tuned.f1;
    Some(format!(
        "tuned P {:.3} (reference 0.87), R {:.3} (0.72), PR-AUC {:.3} (0.750); F1 GAT {gat:.3} (0.30), GCN {gcn:.3} (0.61), GIN {gin:.3} (0.78), tuned {:.3}; ordering GAT < GCN < GIN <= tuned: {ordering}",
        tuned.precision, tuned.recall, tuned.pr_auc, tuned.f1
    ))
}

// ---------------------------------------------------------------- driver

#[test]
fn acceptance_criteria() {
    let scratch = tempfile::tempdir().unwrap();
    let desk = scratch.path().join("desk");
    let criteria: Vec<(&str, &str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1", "gradient correctness", Box::new(criterion_1)),
        ("2", "metric oracle equivalence", Box::new(criterion_2)),
        ("3", "split guarantees", Box::new(criterion_3)),
        ("4", "loss reduction", Box::new(criterion_4)),
        ("5", "ensemble degeneracy and optimality", Box::new(criterion_5)),
        ("6", "quantum hooks", Box::new(criterion_6)),
        ("7", "desk-scale end-to-end", Box::new(|| criterion_7(&desk))),
        ("9", "determinism", Box::new(|| criterion_9(&desk))),
    ];
    let mut failed = Vec::new();
    let _ = writeln!(std::io::stderr());
    for (id, title, run) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())))));
        match outcome {
            Ok(detail) => report_line("PASS", id, title, &detail),
            Err(detail) => {
                report_line("FAIL", id, title, &detail);
                failed.push(id);
            }
        }
    }
    match criterion_8(scratch.path()) {
        Some(detail) => report_line("INFO", "8", "full-scale reproduction (non-gating)", &detail),
        None => report_line("SKIP", "8", "full-scale reproduction (non-gating)", "Elliptic dataset not present"),
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
