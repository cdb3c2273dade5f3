//! `feedloop`: ingest interaction logs, evaluate recommenders, run
//! feedback-loop simulations and sweeps, and export plot-ready reports.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feedloop::ingestion::Granularity;
use feedloop::recommenders::ModelId;
use feedloop::{Error, ErrorKind};

use crate::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "feedloop", version, about = "Recommender feedback-loop simulations")]
pub struct Cli {
    /// Experiment configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed; all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel sweep runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Fail on the first malformed input row (default).
    #[arg(long, global = true, conflicts_with = "lenient")]
    strict: bool,
    /// Skip malformed input rows and report how many were dropped.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a raw interaction CSV (or generate a synthetic one), filter it and
    /// write the normalized log.
    Ingest(IngestArgs),
    /// Train and score recommenders on a temporal split.
    Evaluate(EvaluateArgs),
    /// Run one simulation.
    Simulate(SimulateArgs),
    /// Run every (eta, model, run) combination.
    Sweep(SweepArgs),
    /// Export plot-ready CSVs from run directories.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw CSV; overrides `dataset.path`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub user_col: Option<String>,
    #[arg(long)]
    pub item_col: Option<String>,
    #[arg(long)]
    pub time_col: Option<String>,
    #[arg(long)]
    pub quantity_col: Option<String>,
    #[arg(long, value_parser = parse_granularity)]
    pub granularity: Option<Granularity>,
    /// Generate the `[synthetic]` dataset instead of reading a file.
    #[arg(long)]
    pub synthetic: bool,
    /// Keep users that miss an epoch.
    #[arg(long)]
    pub no_filter: bool,
    /// Also write train/validation/test splits starting at this epoch.
    #[arg(long)]
    pub split_start: Option<u32>,
}

#[derive(Debug, Args)]
pub struct LogArg {
    /// Normalized log; overrides `input`, `[dataset]` and `[synthetic]`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: LogArg,
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelId>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub split_start: Option<u32>,
    /// Grid-search each model over `[evaluate.grid.<model>]` first.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: LogArg,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub model: Option<ModelId>,
    #[arg(long)]
    pub horizon: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: LogArg,
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelId>>,
    #[arg(long)]
    pub runs: Option<u32>,
    #[arg(long)]
    pub horizon: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A sweep output root or a single run directory (default: the output directory).
    #[arg(long)]
    pub runs: Option<PathBuf>,
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    match s {
        "day" => Ok(Granularity::Day),
        "step" => Ok(Granularity::Step),
        _ => Err(format!("expected 'day' or 'step', got '{s}'")),
    }
}

/// Resolved configuration: file values with shared flags applied.
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    /// Whether `--out` or `out` was set rather than defaulted.
    pub out_given: bool,
    pub jobs: usize,
}

fn context(cli: &Cli) -> feedloop::Result<Context> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.simulation.seed = seed;
    }
    let mode = if cli.lenient {
        Some(feedloop::ingestion::ParseMode::Lenient)
    } else if cli.strict {
        Some(feedloop::ingestion::ParseMode::Strict)
    } else {
        None
    };
    if let (Some(mode), Some(ds)) = (mode, config.dataset.as_mut()) {
        ds.mode = mode;
    }
    let given = cli.out.clone().or(config.out.clone());
    let out_given = given.is_some();
    let out = given.unwrap_or_else(|| PathBuf::from("out"));
    let jobs = cli
        .jobs
        .or(config.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    Ok(Context {
        config,
        out,
        out_given,
        jobs,
    })
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Runtime => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let lenient = cli.lenient;
    let result = context(&cli).and_then(|mut ctx| {
        match &cli.command {
            Command::Ingest(a) => commands::ingest(&mut ctx, a, lenient),
            Command::Evaluate(a) => commands::evaluate(&mut ctx, a),
            Command::Simulate(a) => commands::simulate(&mut ctx, a),
            Command::Sweep(a) => commands::sweep(&mut ctx, a),
            Command::Report(a) => report::run(&ctx, a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
