//! Command-line driver: each subcommand reads artifacts from an input
//! directory, writes its results to an output directory, and records a
//! manifest of the resolved configuration and file digests.

mod commands;
mod error;
mod manifest;
mod workspace;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sacdnet_core::model::ModelKind;

pub use error::{CliError, CliResult, ErrorClass};
pub use manifest::{FileDigest, Manifest};

#[derive(Debug, Parser)]
#[command(name = "sacdnet", version, about = "Early type-2 diabetes prediction from EHR encounters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort (patients.jsonl, encounters.jsonl, bookkeeping.json).
    Synth(SynthArgs),
    /// Filter, impute and collapse encounters into one example per patient.
    Preprocess(PreprocessArgs),
    /// Build the five undersampled train/test splits.
    Folds(FoldsArgs),
    /// Train a model on one or all folds.
    Train(TrainArgs),
    /// Score trained models on their test splits.
    Evaluate(EvaluateArgs),
    /// Monte Carlo dropout predictions with entropy and abstention flags.
    McPredict(McArgs),
    /// Metrics per age bucket, gender and race.
    Fairness(FairnessArgs),
    /// Entropy histograms and certain/uncertain breakdowns from MC predictions.
    UncertaintyReport(UncertaintyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IoArgs {
    /// Directory holding the inputs of this step.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for results (defaults to the input directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl IoArgs {
    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| self.input.clone())
    }
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Master seed; falls back to SACDNET_SEED, then 42.
    #[arg(long, env = "SACDNET_SEED", default_value_t = 42)]
    pub seed: u64,
}

/// A single fold index or every fold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldSel {
    All,
    One(usize),
}

impl FoldSel {
    pub fn folds(self) -> Vec<usize> {
        match self {
            FoldSel::All => (0..sacdnet_core::dataset::NUM_FOLDS).collect(),
            FoldSel::One(k) => vec![k],
        }
    }

    pub fn suffix(self) -> String {
        match self {
            FoldSel::All => String::new(),
            FoldSel::One(k) => format!("-fold{k}"),
        }
    }
}

fn parse_fold(s: &str) -> Result<FoldSel, String> {
    if s == "all" {
        return Ok(FoldSel::All);
    }
    match s.parse::<usize>() {
        Ok(k) if k < sacdnet_core::dataset::NUM_FOLDS => Ok(FoldSel::One(k)),
        _ => Err(format!(
            "expected `all` or a fold index below {}",
            sacdnet_core::dataset::NUM_FOLDS
        )),
    }
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: sacdnet_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 10_000)]
    pub patients: usize,
    #[arg(long, default_value_t = 0.1)]
    pub prevalence: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// EWMA smoothing factor in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Vitals attributes missing in more than this percentage of visits are dropped.
    #[arg(long, default_value_t = 50.0)]
    pub drop_threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FoldsArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, value_parser = parse_model, default_value = "sacdnet")]
    pub model: ModelKind,
    #[arg(long, value_parser = parse_fold, default_value = "all")]
    pub fold: FoldSel,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Model to score; every trained model when omitted.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long, value_parser = parse_fold, default_value = "all")]
    pub fold: FoldSel,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, value_parser = parse_model, default_value = "sacdnet")]
    pub model: ModelKind,
    #[arg(long, value_parser = parse_fold, default_value = "all")]
    pub fold: FoldSel,
    /// Number of stochastic forward passes.
    #[arg(long, default_value_t = sacdnet_core::uncertainty::DEFAULT_PASSES)]
    pub passes: usize,
    /// Entropy threshold in nats.
    #[arg(long, default_value_t = sacdnet_core::uncertainty::DEFAULT_THETA)]
    pub theta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FairnessArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long, value_parser = parse_fold, default_value = "all")]
    pub fold: FoldSel,
}

#[derive(Debug, Clone, Args)]
pub struct UncertaintyArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, value_parser = parse_model, default_value = "sacdnet")]
    pub model: ModelKind,
    #[arg(long, value_parser = parse_fold, default_value = "all")]
    pub fold: FoldSel,
    #[arg(long, default_value_t = sacdnet_core::uncertainty::DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Lower edge of the probability band treated as uncertain for the
    /// deterministic comparison.
    #[arg(long, default_value_t = 0.4)]
    pub band_low: f64,
    #[arg(long, default_value_t = 0.6)]
    pub band_high: f64,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Folds(a) => commands::folds(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::McPredict(a) => commands::mc_predict(a),
        Command::Fairness(a) => commands::fairness(a),
        Command::UncertaintyReport(a) => commands::uncertainty_report(a),
    }
}
