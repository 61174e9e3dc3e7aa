//! `labnoise` command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use labnoise::{NoiseKind, RemoveRatio};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "labnoise", version, about = "Label-noise theory, clean-sample selection and co-training")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Global {
    /// Master seed for every random stream
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (stdout for tabular commands when omitted)
    #[serde(skip)]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Turn warnings such as early INCV termination into failures
    #[arg(long, global = true)]
    pub strict: bool,
    /// Format for tabular results
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a Gaussian blob dataset
    Blobs(BlobsArgs),
    /// Corrupt the labels of a dataset
    Corrupt(CorruptArgs),
    /// Closed-form accuracy, LP and LR over a noise grid
    Theory(TheoryArgs),
    /// Monte Carlo check of the closed forms with the oracle or 1-NN learner
    Simulate(SimulateArgs),
    /// One round of noisy cross-validation
    Ncv(NcvArgs),
    /// Iterative noisy cross-validation
    Incv(IncvArgs),
    /// Co-train two learners on a selection
    Cotrain(CotrainArgs),
    /// Plain training on the full noisy set (baseline)
    Train(TrainArgs),
    /// Merge CSV outputs of several runs into one table
    Report(ReportArgs),
    /// Rerun the experiment recorded in a config.json
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BlobsArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub per_class: usize,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    /// Sample stream; different streams share class means
    #[arg(long, default_value_t = 1)]
    pub stream: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CorruptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "symmetric")]
    pub noise: NoiseKind,
    #[arg(long)]
    pub ratio: f64,
    /// Target class per class for asymmetric noise (default i -> i+1)
    #[arg(long, value_delimiter = ',')]
    pub mapping: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TheoryArgs {
    #[arg(long, default_value = "symmetric")]
    pub kind: NoiseKind,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// `start:stop:step`, a single value, or a comma list
    #[arg(long, default_value = "0:1:0.05")]
    pub grid: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimLearner {
    Oracle,
    Knn,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimLearner::Oracle)]
    pub learner: SimLearner,
    #[arg(long, default_value = "symmetric")]
    pub kind: NoiseKind,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value = "0.2,0.5,0.8")]
    pub grid: String,
    /// Samples per grid point (train and test size each for knn)
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 20.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Oracle,
    Knn,
    Softmax,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct LearnerArgs {
    #[arg(long, value_enum, default_value_t = LearnerKind::Softmax)]
    pub learner: LearnerKind,
    /// Neighbours for knn
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Hidden width for softmax; linear when omitted
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, value_delimiter = ',')]
    pub decay_epochs: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub decay_factor: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct NcvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Closed form used to estimate the noise ratio
    #[arg(long, default_value = "symmetric")]
    pub eps_kind: NoiseKind,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct IncvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value = "symmetric")]
    pub eps_kind: NoiseKind,
    #[arg(long, default_value_t = 4)]
    pub iterations: usize,
    /// `auto` or a non-negative number
    #[arg(long, default_value = "auto")]
    pub remove_ratio: RemoveRatio,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CotrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// selection.json written by ncv or incv
    #[arg(long)]
    pub selection: PathBuf,
    /// Clean test set for per-epoch accuracy
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, value_delimiter = ',')]
    pub decay_epochs: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub decay_factor: f64,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Noise ratio of the selection; measured or predicted when omitted
    #[arg(long)]
    pub eps_s: Option<f64>,
    #[arg(long, default_value = "symmetric")]
    pub eps_kind: NoiseKind,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub learner: LearnerArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReportArgs {
    /// CSV files to merge; each row is prefixed with its run name
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RerunArgs {
    pub config: PathBuf,
}

/// Resolved configuration written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub strict: bool,
    pub format: Format,
    #[serde(flatten)]
    pub command: Command,
}

/// Bad arguments or missing inputs; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<labnoise::Error>() {
        Some(labnoise::Error::Config(_)) | Some(labnoise::Error::Domain(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
