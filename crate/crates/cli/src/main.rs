//! `homogcl`: generate synthetic graphs, train encoders, evaluate embeddings
//! and run diagnostics.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "HOMOGCL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "homogcl", version, about = "Homophily-driven graph contrastive learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a stochastic block model graph as edge, feature and label files.
    GenData(GenDataArgs),
    /// Train an encoder and write metrics, embeddings and a run manifest.
    Train(TrainArgs),
    /// Score stored embeddings by linear probe and/or k-means clustering.
    Eval(EvalArgs),
    /// Diagnostics over trained or freshly trained models.
    #[command(subcommand)]
    Diagnose(Diagnose),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.001)]
    pub p_out: f64,
    #[arg(long, default_value_t = 30)]
    pub feat_dim: usize,
    /// Probability of flipping each binary feature.
    #[arg(long, default_value_t = 0.3)]
    pub flip_prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// Flat `key = value` config file (a run manifest also works).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set loss.mode=grace`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Repeat the run for each value, e.g. `--sweep cluster.k=5,10,20`.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    pub sweep: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Classify,
    Cluster,
    All,
}

#[derive(Debug, Args, Clone)]
pub struct SplitArgs {
    /// Split file with `train:`, `val:` and `test:` lines.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 500)]
    pub val_size: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Embedding matrix file; defaults to `embeddings.txt` of `--run`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Run directory holding a manifest and embeddings.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Task::All)]
    pub task: Task,
    /// Repetitions; defaults to 5 probes and 10 clusterings.
    #[arg(long)]
    pub runs: Option<usize>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results file; printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Diagnose {
    /// Train GRACE without augmentation with and without message passing and
    /// compare linear-probe accuracy with a probe on raw features.
    MpAblation(MpAblationArgs),
    /// Positive and negative pair cosine per snapshot of a training run.
    SimilarityTrace(SimilarityTraceArgs),
    /// Homophily of edges binned by descending saliency.
    SaliencyBins(SaliencyBinsArgs),
}

#[derive(Debug, Args)]
pub struct MpAblationArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimilarityTraceArgs {
    /// Run directory written by `train` with `train.snapshot_every > 0`.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Args)]
pub struct SaliencyBinsArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of clusters; defaults to `cluster.k` of the run manifest.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub bin_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Diagnose(Diagnose::MpAblation(a)) => commands::mp_ablation(&a),
        Command::Diagnose(Diagnose::SimilarityTrace(a)) => commands::similarity_trace(&a),
        Command::Diagnose(Diagnose::SaliencyBins(a)) => commands::saliency_bins(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
