//! `nasflat` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 bad input data or an
//! infeasible request, 4 internal error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nasflat", version, about = "Few-shot hardware latency predictors for NAS search spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic device family and latency dataset.
    Synth(SynthArgs),
    /// Split devices into source and target sets.
    Partition(PartitionArgs),
    /// Select architectures to measure on a target device.
    Sample(SampleArgs),
    /// Pretrain a predictor on the source devices of a split.
    Pretrain(PretrainArgs),
    /// Few-shot transfer to every target device of a split.
    Transfer(TransferArgs),
    /// Evaluate transferred predictors on held-out measurements.
    Eval(EvalArgs),
    /// Latency-constrained search with a transferred predictor.
    Search(SearchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "nb201")]
    pub space: String,
    #[arg(long, default_value_t = 10)]
    pub devices: usize,
    #[arg(long, default_value_t = 500)]
    pub archs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent devices; the rest are jittered clones of them.
    #[arg(long)]
    pub roots: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub jitter_lo: f64,
    #[arg(long, default_value_t = 0.8)]
    pub jitter_hi: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub latency: PathBuf,
    /// Source-set size.
    #[arg(long)]
    pub m: usize,
    /// Target-set size.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub archs: PathBuf,
    #[arg(long)]
    pub sampler: String,
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub encoding: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    pub encoding_kind: String,
    /// Reference latencies for the latency_oracle sampler.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CommonData {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub latency: Option<PathBuf>,
    #[arg(long)]
    pub archs: Option<PathBuf>,
    #[arg(long)]
    pub encoding: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: CommonData,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub data: CommonData,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Pretrained checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Output directory of `transfer`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub latency: PathBuf,
    #[arg(long)]
    pub archs: PathBuf,
    #[arg(long)]
    pub encoding: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    pub encoding_kind: String,
    /// Also write pred,truth pairs per device and trial.
    #[arg(long)]
    pub scatter: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// A transferred checkpoint directory (one target, one trial).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Candidate architectures.
    #[arg(long)]
    pub archs: PathBuf,
    /// Defaults to the last device registered in the checkpoint.
    #[arg(long)]
    pub device: Option<String>,
    #[arg(long)]
    pub constraint_ms: f64,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long)]
    pub encoding: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    pub encoding_kind: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("NASFLAT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("NASFLAT_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Partition(a) => commands::partition(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::Transfer(a) => commands::transfer(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Search(a) => commands::search(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nasflat: {e}");
            ExitCode::from(e.code())
        }
    }
}
