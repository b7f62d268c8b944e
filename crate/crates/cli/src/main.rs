use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gnnguard_core::graph::IngestConfig;
use gnnguard_core::pipeline::{
    self, DataSource, PipelineError, RunConfig, SplitSelection,
};
use gnnguard_core::synth::SyntheticSpec;

#[derive(Parser)]
#[command(name = "gnnguard", version, about = "Graph-based illicit transaction detection")]
struct Cli {
    /// Run configuration (JSON). Defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed (and the synthetic generator seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the split mode.
    #[arg(long, global = true, value_enum)]
    split: Option<SplitArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Stratified,
    Chronological,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest Elliptic-format CSV files into a graph bundle and integrity report.
    Ingest {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Feature columns after id and time step; inferred when omitted.
        #[arg(long)]
        feature_dim: Option<usize>,
    },
    /// Generate the synthetic planted-fraud graph bundle.
    Synth,
    /// Partition labeled nodes into train/val/test.
    Split,
    /// Train every configured backbone.
    Train,
    /// Tune soft-voting weights and fit the stacker on validation predictions.
    Ensemble,
    /// Score models and ensembles on the test split.
    Evaluate,
    /// Merge evaluations into report.json.
    Report,
    /// Run every stage in order.
    Run,
    /// Print the default configuration.
    Defaults,
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
        if let DataSource::Synthetic(spec) = &mut config.data {
            spec.seed = seed;
        }
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(split) = cli.split {
        config.split.mode = match split {
            SplitArg::Stratified => SplitSelection::Stratified,
            SplitArg::Chronological => SplitSelection::Chronological,
            SplitArg::Both => SplitSelection::Both,
        };
    }
    Ok(config)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = load_config(&cli)?;
    let modes = config.split.mode.modes();
    match cli.command {
        Command::Defaults => print_json(&RunConfig::default()),
        Command::Ingest {
            features,
            edges,
            classes,
            feature_dim,
        } => {
            if features.is_some() || edges.is_some() || classes.is_some() {
                let (Some(f), Some(e), Some(c)) = (features, edges, classes) else {
                    return Err(PipelineError::Config(
                        "--features, --edges and --classes go together".into(),
                    ));
                };
                config.data = DataSource::Files(IngestConfig {
                    features_path: f,
                    edges_path: e,
                    classes_path: c,
                    feature_dim,
                    ..IngestConfig::default()
                });
            }
            if !matches!(config.data, DataSource::Files(_)) {
                return Err(PipelineError::Config(
                    "ingest needs file inputs in the config or on the command line".into(),
                ));
            }
            print_json(&pipeline::prepare_data(&config)?.integrity);
        }
        Command::Synth => {
            if !matches!(config.data, DataSource::Synthetic(_)) {
                let seed = config.seed;
                config.data = DataSource::Synthetic(SyntheticSpec {
                    seed,
                    ..SyntheticSpec::default()
                });
            }
            let s = pipeline::prepare_data(&config)?;
            println!(
                "{} nodes, {} edges, {} illicit",
                s.node_count, s.edge_count, s.integrity.label_histogram.illicit
            );
        }
        Command::Split => {
            for mode in modes {
                let split = pipeline::run_split(&config, mode)?;
                println!(
                    "{}: train {} val {} test {} excluded {}",
                    mode.as_str(),
                    split.count(gnnguard_core::split::Part::Train),
                    split.count(gnnguard_core::split::Part::Val),
                    split.count(gnnguard_core::split::Part::Test),
                    split.count(gnnguard_core::split::Part::Excluded),
                );
            }
        }
        Command::Train => {
            for mode in modes {
                for m in pipeline::run_train(&config, mode)? {
                    println!(
                        "{}/{}: best epoch {} of {}",
                        mode.as_str(),
                        m.config.backbone.as_str(),
                        m.best_epoch,
                        m.train_trace.len()
                    );
                }
            }
        }
        Command::Ensemble => {
            for mode in modes {
                let e = pipeline::run_ensemble(&config, mode)?;
                println!(
                    "{}: weights {:?}{}",
                    mode.as_str(),
                    e.weights.w,
                    if e.weights.tuning_record.fallback {
                        " (F1 fallback)"
                    } else {
                        ""
                    }
                );
            }
        }
        Command::Evaluate => {
            for mode in modes {
                let e = pipeline::run_evaluate(&config, mode)?;
                for s in &e.systems {
                    let m = &s.metrics;
                    println!(
                        "{}/{}: P {:.3} R {:.3} F1 {:.3} FPR {:.4} PR-AUC {:.3} ROC-AUC {:.3}",
                        mode.as_str(),
                        s.name,
                        m.precision,
                        m.recall,
                        m.f1,
                        m.fpr,
                        m.pr_auc,
                        m.roc_auc
                    );
                }
            }
        }
        Command::Report => {
            pipeline::run_report(&config)?;
            println!("{}", config.output_dir.join("report.json").display());
        }
        Command::Run => {
            pipeline::run_all(&config)?;
            println!("{}", config.output_dir.join("report.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gnnguard: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
