//! The `mars` command line.
//!
//! `build-data` turns conversation corpora into split sample files, `train`
//! runs one training method and writes the best-dev checkpoint, `eval` scores
//! a checkpoint or a baseline on per-language sample files and `report`
//! renders saved evaluation reports side by side. Every command that writes
//! files also writes a [`RunManifest`].

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use commands::{build_data, eval, report, train};
pub use manifest::{sha256_bytes, sha256_file, version_string, write_atomic, RunManifest};

use crate::corpus::CorpusError;
use crate::embeddings::EmbeddingError;
use crate::engine::EngineError;
use crate::evaluation::EvalError;
use crate::model::ModelError;
use crate::training::{Method, TrainError};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "mars", version, about = "Multilingual addressee and response selection")]
pub struct Cli {
    /// Training configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract samples from corpora and split them per language.
    BuildData(BuildDataArgs),
    /// Train one method and save the best-dev checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint or baseline on per-language sample files.
    Eval(EvalArgs),
    /// Render saved evaluation reports as one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    /// Corpus JSONL file; may be repeated and may mix languages.
    #[arg(long = "corpus", required = true)]
    pub corpora: Vec<PathBuf>,
    /// Output directory for `{lang}.{train,dev,test}.jsonl` and stats.
    #[arg(long)]
    pub out: PathBuf,
    /// Candidate responses per sample (2 or 10).
    #[arg(long, default_value_t = 2)]
    pub r_size: usize,
    #[arg(long, default_value_t = crate::corpus::DEFAULT_CONTEXT_LEN)]
    pub context_len: usize,
    #[arg(long, default_value_t = 0.9)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.05)]
    pub dev_frac: f64,
    #[arg(long, default_value_t = 0.05)]
    pub test_frac: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Overrides the configured method.
    #[arg(long)]
    pub method: Option<Method>,
    /// Checkpoint to start from (required by finetune, joint and wgan).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Sample file, typically machine-translated into the target language,
    /// to pre-train on before the method runs.
    #[arg(long)]
    pub pretrain_corpus: Option<PathBuf>,
    /// Output directory for `model.ckpt`, `train_log.jsonl` and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Chance,
    Tfidf,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Chance => "chance",
            Baseline::Tfidf => "tfidf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Dev,
    Test,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("system").required(true).args(["checkpoint", "baseline"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Languages to score; defaults depend on the checkpoint's method.
    #[arg(long, value_delimiter = ',')]
    pub langs: Vec<String>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// Report JSON path; the manifest goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files written by `eval`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command, classified by its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string();
        match e {
            TrainError::Config(_) | TrainError::MissingInit { .. } | TrainError::Incompatible(_) => {
                CliError::Config(msg)
            }
            TrainError::Data(_) => CliError::Data(msg),
            TrainError::Numeric { .. } => CliError::Numeric(msg),
            TrainError::Model(m) => m.into(),
            TrainError::Eval(ev) => ev.into(),
            TrainError::Engine(en) => en.into(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match e {
            ModelError::Incompatible(_) => CliError::Config(msg),
            ModelError::InvalidSample(_) | ModelError::NoAgents | ModelError::Checkpoint(_) | ModelError::Io { .. } => {
                CliError::Data(msg)
            }
            ModelError::Embedding(em) => em.into(),
            ModelError::Engine(en) => en.into(),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NonFinite { .. } | EngineError::ProbabilityDomain { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ThreadPool(_) => CliError::Other(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidConfig(_) | CorpusError::InvalidSplit(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Runs one parsed command. `argv` is recorded in manifests.
pub fn run(cli: &Cli, argv: Vec<String>) -> Result<(), CliError> {
    match &cli.command {
        Command::BuildData(a) => build_data(cli, a, argv),
        Command::Train(a) => train(cli, a, argv),
        Command::Eval(a) => eval(cli, a, argv),
        Command::Report(a) => report(a, argv),
    }
}

/// Entry point of the binary: parses `std::env::args`, runs and maps errors
/// to exit codes.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    match run(&cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
