//! End-to-end runs driven by a single JSON config.
//!
//! Every stage reads only the artifacts written by earlier stages under the
//! output directory:
//!
//! ```text
//! data/{features,edges,classes}.csv, data/integrity.json     ingest | synth
//! <mode>/split.csv                                            split
//! <mode>/models/<backbone>.json                               train
//! <mode>/ensemble/{weights,stacker}.json                      ensemble
//! <mode>/evaluation.json, <mode>/curves/*.csv                 evaluate
//! report.json                                                 report
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ensemble::{
    fit_stacker, grid_units, soft_vote, stack_predict, tune_weights, uniform_weights,
    EnsembleWeights, StackingModel, DECISION_THRESHOLD, DEFAULT_FPR_CAP, DEFAULT_GRID_STEP,
};
use crate::features::{assemble_features, read_attributes, AssemblyConfig};
use crate::gnn::{
    predict_proba_with, train_with_source, Activation, Backbone, GraphOperators, ModelConfig,
    TrainedModel, DEFAULT_HIDDEN, OUTPUT_CLASSES,
};
use crate::graph::{write_bundle, IngestConfig, IntegrityReport, Label, LabelMapping, TransactionGraph};
use crate::metrics::{pr_curve, roc_curve, summarize, write_curve_csv, CurvePoint, MetricSummary};
use crate::quantum::{QuantumLayer, QuantumLayerConfig, RandomSource};
use crate::split::{
    chronological_split, stratified_split, Part, SplitAssignment, SplitMode, DEFAULT_ALPHA,
    DEFAULT_BETA, DEFAULT_RATIOS,
};
use crate::synth::{generate, SyntheticSpec};
use crate::tensor::Tensor2;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("training: {0}")]
    Training(String),
    #[error("ensemble: {0}")]
    Ensemble(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Format(_) => 2,
            PipelineError::Integrity(_) => 3,
            PipelineError::Training(_) => 4,
            PipelineError::Ensemble(_) => 5,
            PipelineError::Evaluation(_) => 6,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Files(IngestConfig),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelection {
    Stratified,
    Chronological,
    Both,
}

impl SplitSelection {
    pub fn modes(self) -> Vec<SplitMode> {
        match self {
            SplitSelection::Stratified => vec![SplitMode::Stratified],
            SplitSelection::Chronological => vec![SplitMode::Chronological],
            SplitSelection::Both => vec![SplitMode::Stratified, SplitMode::Chronological],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSettings {
    pub mode: SplitSelection,
    pub ratios: [f64; 3],
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            mode: SplitSelection::Both,
            ratios: DEFAULT_RATIOS,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
        }
    }
}

/// One backbone's hyperparameters. Input width and seed are filled in at
/// training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub backbone: Backbone,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub attention_heads: usize,
    pub gin_epsilon: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self::for_backbone(Backbone::Gcn)
    }
}

impl ModelSettings {
    pub fn for_backbone(backbone: Backbone) -> Self {
        let c = ModelConfig::new(backbone, 1);
        Self {
            backbone,
            hidden_dims: vec![DEFAULT_HIDDEN],
            activation: c.activation,
            attention_heads: c.attention_heads,
            gin_epsilon: c.gin_epsilon,
            learning_rate: c.learning_rate,
            max_epochs: c.max_epochs,
            patience: c.patience,
        }
    }

    pub fn model_config(&self, in_dim: usize, seed: u64) -> ModelConfig {
        let mut layer_dims = vec![in_dim];
        layer_dims.extend_from_slice(&self.hidden_dims);
        layer_dims.push(OUTPUT_CLASSES);
        ModelConfig {
            backbone: self.backbone,
            layer_dims,
            activation: self.activation,
            attention_heads: self.attention_heads,
            gin_epsilon: self.gin_epsilon,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSettings {
    pub fpr_cap: f64,
    pub grid_step: f64,
    pub stacker: bool,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            fpr_cap: DEFAULT_FPR_CAP,
            grid_step: DEFAULT_GRID_STEP,
            stacker: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    /// ChaCha streams derived from `seed`.
    #[default]
    Seeded,
    /// Bytes replayed from a file. Each stage reads the file from the start.
    EntropyFile { path: PathBuf },
}

/// Optional measurement-mediated message passing. When enabled, the first
/// `n_qubits` feature columns are squashed into `[0, π]` by `π·sigmoid(x)`,
/// passed through the quantum layer, and the Z expectations are appended as
/// extra feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct QuantumHook {
    pub enabled: bool,
    pub layer: QuantumLayerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSource,
    pub features: AssemblyConfig,
    /// `external_id, v_in, v_out, fee, size, outputs..` rows; needed by the
    /// derived and mixed feature modes.
    pub attributes_path: Option<PathBuf>,
    pub split: SplitSettings,
    pub models: Vec<ModelSettings>,
    pub ensemble: EnsembleSettings,
    pub seed: u64,
    pub random_source: SourceKind,
    pub quantum: QuantumHook,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            features: AssemblyConfig::default(),
            attributes_path: None,
            split: SplitSettings::default(),
            models: Backbone::ALL.into_iter().map(ModelSettings::for_backbone).collect(),
            ensemble: EnsembleSettings::default(),
            seed: 0,
            random_source: SourceKind::Seeded,
            quantum: QuantumHook::default(),
            output_dir: PathBuf::from("gnnguard-out"),
        }
    }
}

const STAGE_SPLIT: u64 = 1;
const STAGE_QUANTUM: u64 = 2;
const STAGE_TRAIN: u64 = 16;

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if let DataSource::Files(ingest) = &self.data {
            for p in [&ingest.features_path, &ingest.edges_path, &ingest.classes_path] {
                if !p.exists() {
                    return bad(format!("{} does not exist", p.display()));
                }
            }
        }
        if let Some(p) = &self.attributes_path {
            if !p.exists() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        if let SourceKind::EntropyFile { path } = &self.random_source {
            if !path.exists() {
                return bad(format!("{} does not exist", path.display()));
            }
        }
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].iter().any(|o| o.backbone == m.backbone) {
                return bad(format!("backbone {} listed twice", m.backbone.as_str()));
            }
        }
        grid_units(self.ensemble.grid_step).map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.ensemble.fpr_cap) {
            return bad("fpr_cap must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// SHA-256 of the config with the output directory blanked, so runs that
    /// differ only in where they write share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn source(&self, stage: u64) -> Result<RandomSource> {
        match &self.random_source {
            SourceKind::Seeded => Ok(RandomSource::seeded(stage_seed(self.seed, stage))),
            SourceKind::EntropyFile { path } => RandomSource::from_entropy_file(path)
                .map_err(|e| PipelineError::Config(e.to_string())),
        }
    }

    fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    fn mode_dir(&self, mode: SplitMode) -> PathBuf {
        self.output_dir.join(mode.as_str())
    }

    fn label_mapping(&self) -> LabelMapping {
        match &self.data {
            DataSource::Files(ingest) => ingest.label_mapping.clone(),
            DataSource::Synthetic(_) => LabelMapping::default(),
        }
    }
}

fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed ^ (stage + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn create_dir(dir: &Path, err: fn(String) -> PipelineError) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| err(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T, err: fn(String) -> PipelineError) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| err(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, err: fn(String) -> PipelineError) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| err(format!("{}: {e}", path.display())))
}

fn graph_error(e: crate::graph::GraphError) -> PipelineError {
    if e.is_integrity() {
        PipelineError::Integrity(e.to_string())
    } else {
        PipelineError::Format(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub max_time_step: u32,
    pub feature_dim: usize,
    pub integrity: IntegrityReport,
}

/// Ingests the configured files, or generates the synthetic graph, and writes
/// the bundle plus integrity report under `data/`.
pub fn prepare_data(config: &RunConfig) -> Result<DataSummary> {
    config.validate()?;
    let (graph, integrity) = match &config.data {
        DataSource::Files(ingest) => ingest.ingest().map_err(graph_error)?,
        DataSource::Synthetic(spec) => {
            let graph = generate(spec).map_err(|e| PipelineError::Config(e.to_string()))?;
            let integrity = IntegrityReport {
                label_histogram: crate::graph::LabelHistogram::from_labels(graph.labels()),
                nodes_retained: graph.node_count(),
                edges_retained: graph.edge_count(),
                ..IntegrityReport::default()
            };
            (graph, integrity)
        }
    };
    let dir = config.data_dir();
    write_bundle(&graph, &dir, &config.label_mapping()).map_err(graph_error)?;
    write_json(&dir.join("integrity.json"), &integrity, PipelineError::Format)?;
    Ok(DataSummary {
        node_count: graph.node_count(),
        edge_count: graph.edge_count(),
        max_time_step: graph.max_time_step(),
        feature_dim: graph.feature_dim(),
        integrity,
    })
}

/// Reads the graph bundle written by [`prepare_data`].
pub fn load_graph(config: &RunConfig, err: fn(String) -> PipelineError) -> Result<TransactionGraph> {
    let dir = config.data_dir();
    let ingest = IngestConfig {
        label_mapping: config.label_mapping(),
        ..IngestConfig::for_bundle(&dir, None)
    };
    ingest
        .ingest()
        .map(|(g, _)| g)
        .map_err(|e| err(format!("graph bundle in {}: {e}", dir.display())))
}

pub fn make_split(config: &RunConfig, graph: &TransactionGraph, mode: SplitMode) -> Result<SplitAssignment> {
    let s = &config.split;
    let split = match mode {
        SplitMode::Stratified => {
            stratified_split(graph, s.ratios, &mut config.source(STAGE_SPLIT)?)
        }
        SplitMode::Chronological => chronological_split(graph, s.alpha, s.beta),
    };
    split.map_err(|e| PipelineError::Integrity(e.to_string()))
}

pub fn run_split(config: &RunConfig, mode: SplitMode) -> Result<SplitAssignment> {
    let graph = load_graph(config, PipelineError::Training)?;
    let split = make_split(config, &graph, mode)?;
    let dir = config.mode_dir(mode);
    create_dir(&dir, PipelineError::Training)?;
    split
        .write_csv(&dir.join("split.csv"))
        .map_err(|e| PipelineError::Training(e.to_string()))?;
    Ok(split)
}

fn load_split(
    config: &RunConfig,
    graph: &TransactionGraph,
    mode: SplitMode,
    err: fn(String) -> PipelineError,
) -> Result<SplitAssignment> {
    let parts = SplitAssignment::read_parts(&config.mode_dir(mode).join("split.csv"))
        .map_err(|e| err(e.to_string()))?;
    if parts.len() != graph.node_count() {
        return Err(err(format!(
            "split has {} rows, graph has {} nodes",
            parts.len(),
            graph.node_count()
        )));
    }
    Ok(SplitAssignment {
        assignment: parts,
        mode,
        ratios: config.split.ratios,
        alpha_beta: (mode == SplitMode::Chronological)
            .then_some((config.split.alpha, config.split.beta)),
    })
}

/// Maps each of the first `n` columns into `[0, π]` with `π·sigmoid(x)`.
pub fn hook_angles(features: &Tensor2, n: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(features.rows(), n);
    for r in 0..features.rows() {
        for c in 0..n {
            let x = features.get(r, c);
            out.set(r, c, std::f64::consts::PI / (1.0 + (-x).exp()));
        }
    }
    out
}

/// Model input matrix for a split: assembled features, then the quantum
/// hook's columns when enabled.
pub fn model_inputs(
    config: &RunConfig,
    graph: &TransactionGraph,
    split: &SplitAssignment,
    err: fn(String) -> PipelineError,
) -> Result<Tensor2> {
    let attrs = match &config.attributes_path {
        Some(p) => Some(read_attributes(p, graph).map_err(|e| err(e.to_string()))?),
        None => None,
    };
    let fit_rows = split.indices(Part::Train);
    let base = assemble_features(graph, attrs.as_deref(), &fit_rows, &config.features)
        .map_err(|e| err(e.to_string()))?
        .values;
    if !config.quantum.enabled {
        return Ok(base);
    }
    let n = config.quantum.layer.n_qubits;
    if n > base.cols() {
        return Err(err(format!(
            "quantum hook needs {n} feature columns, have {}",
            base.cols()
        )));
    }
    let layer = QuantumLayer::init(config.quantum.layer, &mut config.source(STAGE_QUANTUM)?)
        .map_err(|e| err(e.to_string()))?;
    let out = layer
        .forward(graph, &hook_angles(&base, n))
        .map_err(|e| err(e.to_string()))?;
    Ok(Tensor2::hconcat(&[&base, &out.values]))
}

fn model_path(config: &RunConfig, mode: SplitMode, backbone: Backbone) -> PathBuf {
    config
        .mode_dir(mode)
        .join("models")
        .join(format!("{}.json", backbone.as_str()))
}

/// Trains every configured backbone on the stored split.
pub fn run_train(config: &RunConfig, mode: SplitMode) -> Result<Vec<TrainedModel>> {
    let graph = load_graph(config, PipelineError::Training)?;
    let split = load_split(config, &graph, mode, PipelineError::Training)?;
    let x = model_inputs(config, &graph, &split, PipelineError::Training)?;
    create_dir(&config.mode_dir(mode).join("models"), PipelineError::Training)?;
    let mut models = Vec::new();
    for (k, settings) in config.models.iter().enumerate() {
        let stage = STAGE_TRAIN + k as u64;
        let model_config = settings.model_config(x.cols(), stage_seed(config.seed, stage));
        let model = train_with_source(&graph, &x, &split, &model_config, &mut config.source(stage)?)
            .map_err(|e| PipelineError::Training(format!("{}: {e}", settings.backbone.as_str())))?;
        model
            .save(&model_path(config, mode, settings.backbone))
            .map_err(|e| PipelineError::Training(e.to_string()))?;
        models.push(model);
    }
    Ok(models)
}

fn load_models(config: &RunConfig, mode: SplitMode, err: fn(String) -> PipelineError) -> Result<Vec<TrainedModel>> {
    config
        .models
        .iter()
        .map(|m| TrainedModel::load(&model_path(config, mode, m.backbone)).map_err(|e| err(e.to_string())))
        .collect()
}

/// Illicit-class probability matrices of every model on every node.
fn base_probas(
    config: &RunConfig,
    mode: SplitMode,
    err: fn(String) -> PipelineError,
) -> Result<(TransactionGraph, SplitAssignment, Vec<Tensor2>)> {
    let graph = load_graph(config, err)?;
    let split = load_split(config, &graph, mode, err)?;
    let x = model_inputs(config, &graph, &split, err)?;
    let ops = GraphOperators::new(&graph);
    let probas = load_models(config, mode, err)?
        .iter()
        .map(|m| predict_proba_with(m, &ops, &x).map_err(|e| err(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok((graph, split, probas))
}

fn labeled_rows(graph: &TransactionGraph, split: &SplitAssignment, part: Part) -> (Vec<usize>, Vec<bool>) {
    let rows: Vec<usize> = split
        .indices(part)
        .into_iter()
        .filter(|&v| graph.labels()[v].is_labeled())
        .collect();
    let truth = rows.iter().map(|&v| graph.labels()[v] == Label::Illicit).collect();
    (rows, truth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleArtifacts {
    pub weights: EnsembleWeights,
    pub stacker: Option<StackingModel>,
}

fn ensemble_dir(config: &RunConfig, mode: SplitMode) -> PathBuf {
    config.mode_dir(mode).join("ensemble")
}

/// Tunes voting weights and fits the stacker on validation predictions.
pub fn run_ensemble(config: &RunConfig, mode: SplitMode) -> Result<EnsembleArtifacts> {
    let (graph, split, probas) = base_probas(config, mode, PipelineError::Ensemble)?;
    let (rows, truth) = labeled_rows(&graph, &split, Part::Val);
    let val: Vec<Tensor2> = probas.iter().map(|p| p.select_rows(&rows)).collect();
    let e = &config.ensemble;
    let ens_err = |e: crate::ensemble::EnsembleError| PipelineError::Ensemble(e.to_string());
    let weights = tune_weights(&val, &truth, e.fpr_cap, e.grid_step).map_err(ens_err)?;
    let stacker = if e.stacker {
        Some(fit_stacker(&val, &truth).map_err(ens_err)?)
    } else {
        None
    };
    let dir = ensemble_dir(config, mode);
    create_dir(&dir, PipelineError::Ensemble)?;
    weights.save(&dir.join("weights.json")).map_err(ens_err)?;
    match &stacker {
        Some(s) => s.save(&dir.join("stacker.json")).map_err(ens_err)?,
        None => {
            let _ = fs::remove_file(dir.join("stacker.json"));
        }
    }
    Ok(EnsembleArtifacts { weights, stacker })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Backbone,
    Ensemble,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub name: String,
    pub kind: SystemKind,
    pub metrics: MetricSummary,
    pub pr_curve: Vec<CurvePoint>,
    pub roc_curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub excluded: usize,
    pub test_labeled: usize,
    pub test_illicit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub split_mode: SplitMode,
    pub counts: SplitCounts,
    pub tuned_weights: Vec<f64>,
    pub tuning_fallback: bool,
    pub best_epochs: Vec<(Backbone, usize)>,
    pub systems: Vec<SystemResult>,
}

impl Evaluation {
    pub fn system(&self, name: &str) -> Option<&SystemResult> {
        self.systems.iter().find(|s| s.name == name)
    }
}

pub const TUNED_VOTE: &str = "tuned_soft_vote";
pub const STACKING: &str = "stacking";
pub const EQUAL_VOTE: &str = "equal_soft_vote";

/// Scores every model and ensemble on the labeled test nodes and writes
/// `evaluation.json` plus one CSV per curve.
pub fn run_evaluate(config: &RunConfig, mode: SplitMode) -> Result<Evaluation> {
    let err = PipelineError::Evaluation;
    let (graph, split, probas) = base_probas(config, mode, err)?;
    let models = load_models(config, mode, err)?;
    let dir = ensemble_dir(config, mode);
    let weights = EnsembleWeights::load(&dir.join("weights.json")).map_err(|e| err(e.to_string()))?;
    let stacker = if config.ensemble.stacker {
        Some(StackingModel::load(&dir.join("stacker.json")).map_err(|e| err(e.to_string()))?)
    } else {
        None
    };
    let (rows, truth) = labeled_rows(&graph, &split, Part::Test);
    let test: Vec<Tensor2> = probas.iter().map(|p| p.select_rows(&rows)).collect();
    let ens_err = |e: crate::ensemble::EnsembleError| err(e.to_string());

    let mut scored: Vec<(String, SystemKind, Tensor2)> = config
        .models
        .iter()
        .zip(&test)
        .map(|(m, p)| (m.backbone.as_str().to_string(), SystemKind::Backbone, p.clone()))
        .collect();
    scored.push((
        TUNED_VOTE.into(),
        SystemKind::Ensemble,
        soft_vote(&test, &weights.w).map_err(ens_err)?,
    ));
    if let Some(s) = &stacker {
        scored.push((
            STACKING.into(),
            SystemKind::Ensemble,
            stack_predict(s, &test).map_err(ens_err)?,
        ));
    }
    scored.push((
        EQUAL_VOTE.into(),
        SystemKind::Baseline,
        soft_vote(&test, &uniform_weights(test.len())).map_err(ens_err)?,
    ));

    let curves = config.mode_dir(mode).join("curves");
    create_dir(&curves, err)?;
    let mut systems = Vec::new();
    for (name, kind, p) in scored {
        let scores = p.column(1);
        let metric_err = |e: crate::metrics::MetricsError| err(format!("{name}: {e}"));
        let metrics = summarize(&scores, &truth, DECISION_THRESHOLD).map_err(metric_err)?;
        let pr = pr_curve(&scores, &truth).map_err(metric_err)?;
        let roc = roc_curve(&scores, &truth).map_err(metric_err)?;
        for (suffix, pts) in [("pr", &pr), ("roc", &roc)] {
            let path = curves.join(format!("{name}_{suffix}.csv"));
            write_curve_csv(&path, pts).map_err(|e| err(format!("{}: {e}", path.display())))?;
        }
        systems.push(SystemResult {
            name,
            kind,
            metrics,
            pr_curve: pr,
            roc_curve: roc,
        });
    }
    let evaluation = Evaluation {
        split_mode: mode,
        counts: SplitCounts {
            train: split.count(Part::Train),
            val: split.count(Part::Val),
            test: split.count(Part::Test),
            excluded: split.count(Part::Excluded),
            test_labeled: truth.len(),
            test_illicit: truth.iter().filter(|&&t| t).count(),
        },
        tuned_weights: weights.w.clone(),
        tuning_fallback: weights.tuning_record.fallback,
        best_epochs: models.iter().map(|m| (m.config.backbone, m.best_epoch)).collect(),
        systems,
    };
    write_json(&config.mode_dir(mode).join("evaluation.json"), &evaluation, err)?;
    Ok(evaluation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub data: DataSummary,
    pub splits: Vec<Evaluation>,
}

impl Report {
    pub fn split(&self, mode: SplitMode) -> Option<&Evaluation> {
        self.splits.iter().find(|e| e.split_mode == mode)
    }
}

/// Collects the evaluations of the configured split modes into `report.json`.
pub fn run_report(config: &RunConfig) -> Result<Report> {
    let err = PipelineError::Evaluation;
    let graph = load_graph(config, err)?;
    let integrity: IntegrityReport = read_json(&config.data_dir().join("integrity.json"), err)?;
    let splits = config
        .split
        .mode
        .modes()
        .into_iter()
        .map(|m| read_json(&config.mode_dir(m).join("evaluation.json"), err))
        .collect::<Result<Vec<Evaluation>>>()?;
    let report = Report {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config.hash(),
        seed: config.seed,
        data: DataSummary {
            node_count: graph.node_count(),
            edge_count: graph.edge_count(),
            max_time_step: graph.max_time_step(),
            feature_dim: graph.feature_dim(),
            integrity,
        },
        splits,
    };
    write_json(&config.output_dir.join("report.json"), &report, err)?;
    Ok(report)
}

/// Every stage in order, for every configured split mode.
pub fn run_all(config: &RunConfig) -> Result<Report> {
    prepare_data(config)?;
    for mode in config.split.mode.modes() {
        run_split(config, mode)?;
        run_train(config, mode)?;
        run_ensemble(config, mode)?;
        run_evaluate(config, mode)?;
    }
    run_report(config)
}
