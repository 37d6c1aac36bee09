mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

/// Failure classes with their exit codes: 1 when `diff-tensor` finds a
/// difference, 2 for usage and validation, 3 for I/O.
#[derive(Debug)]
pub enum CliError {
    Differ(String),
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Differ(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Differ(m) | CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<tensorar::Error> for CliError {
    fn from(e: tensorar::Error) -> Self {
        match e {
            tensorar::Error::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tensorar",
    version,
    about = "Low-rank tensor autoregression: simulate, fit, forecast and benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a series from a random low-rank model.
    Simulate(SimulateArgs),
    /// Fit an estimator to a series file.
    Fit(FitArgs),
    /// One-step rolling forecasts over a series.
    Forecast(ForecastArgs),
    /// Run a named simulation study.
    Bench(BenchArgs),
    /// Convert a CSV panel into a series file.
    Ingest(IngestArgs),
    /// Write a series file as a CSV panel.
    Export(ExportArgs),
    /// Compare two tensors (tensor files or model JSON files) entrywise.
    DiffTensor(DiffArgs),
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| format!("expected comma-separated integers, got {s:?}"))
        })
        .collect()
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("expected comma-separated numbers, got {s:?}"))
        })
        .collect()
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// State dimensions, e.g. 5,5.
    #[arg(long, value_parser = parse_list)]
    pub dims: ::std::vec::Vec<usize>,
    /// Multilinear ranks of the transition tensor (2d values).
    #[arg(long, value_parser = parse_list)]
    pub ranks: ::std::vec::Vec<usize>,
    #[arg(long = "T")]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub burn_in: usize,
    /// Series output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Model output file (default: the series path with extension `model.json`).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Store the series as little-endian doubles.
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Estimator settings shared by `fit`, `forecast` and `bench`.
#[derive(Args, Debug, Clone)]
pub struct EstimatorArgs {
    /// Multilinear ranks for RRR and LTR.
    #[arg(long, value_parser = parse_list)]
    pub ranks: Option<::std::vec::Vec<usize>>,
    /// Penalty level: `bic` (default grid), a number, `rate:<c>` (c times the
    /// data-scaled noise rate) or `unit:<c>` (c times 2^{2-d} sqrt(p/T)).
    #[arg(long, default_value = "bic")]
    pub lambda: String,
    /// Explicit BIC grid, comma-separated; overrides `--lambda`.
    #[arg(long, value_parser = parse_floats)]
    pub grid: Option<::std::vec::Vec<f64>>,
    /// ADMM penalty parameter (default: chosen from the data).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub relaxation: Option<f64>,
    /// Iteration cap for ADMM and ALS.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative primal and dual residual tolerance for ADMM.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Relative objective-change tolerance for ALS.
    #[arg(long)]
    pub als_tol: Option<f64>,
    /// TSSN truncation threshold: `auto` or a number.
    #[arg(long, default_value = "auto")]
    pub gamma: String,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub estimator: String,
    #[command(flatten)]
    pub est: EstimatorArgs,
    /// Estimate output file (tensor format).
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics JSON (default: the estimate path with extension `json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub binary: bool,
    /// Include wall-clock time in the report.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// First forecast origin (1-based time index of the first target).
    #[arg(long)]
    pub start: usize,
    /// Refit this estimator at every origin.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Use the transition tensor of a model file (e.g. the simulating model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Use a fixed transition tensor file.
    #[arg(long)]
    pub transition: Option<PathBuf>,
    /// Forecast zero.
    #[arg(long)]
    pub zero: bool,
    #[command(flatten)]
    pub est: EstimatorArgs,
    /// Origins between BIC re-tunes.
    #[arg(long, default_value_t = 12)]
    pub retune_every: usize,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-origin CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum DrawArg {
    PerReplication,
    Fixed,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Study case: 1a…4b (estimator comparisons) or a…h (SSN error scaling).
    #[arg(long)]
    pub case: String,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Sample sizes (comparison cases only).
    #[arg(long = "T", value_parser = parse_list)]
    pub t: Option<::std::vec::Vec<usize>>,
    /// Multilinear ranks (comparison cases only; default all 2).
    #[arg(long, value_parser = parse_list)]
    pub ranks: Option<::std::vec::Vec<usize>>,
    /// Comma-separated estimators (comparison cases only).
    #[arg(long)]
    pub estimators: Option<String>,
    /// Penalty level: `bic`, `rate:<c>` or `unit:<c>` (default: bic for comparisons,
    /// the calibrated rate for scaling sweeps).
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub burn_in: usize,
    #[arg(long, value_enum, default_value = "per-replication")]
    pub model_draw: DrawArg,
    /// Raw result CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON (default: the CSV path with extension `json`).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// CSV with one row per time point; a non-numeric first row is a header.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_list)]
    pub dims: ::std::vec::Vec<usize>,
    /// Centre every column.
    #[arg(long)]
    pub demean: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// CSV output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiffArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    /// Largest accepted absolute entrywise difference.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn init_threads() -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("TENSORAR_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!(
                "TENSORAR_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(args: Vec<OsString>) -> Result<ExitCode, CliError> {
    let args = config::merge(&Cli::command(), args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return Ok(ExitCode::from(code as u8));
        }
    };
    init_threads()?;
    commands::dispatch(cli.command)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
