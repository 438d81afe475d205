//! `fdtnet` command-line harness.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod output;

use output::{Format, Sink};

#[derive(Debug, Parser)]
#[command(
    name = "fdtnet",
    version,
    about = "Spectral filters, FDT filters and stability experiments"
)]
struct Cli {
    /// Seed for every random draw; overrides the seed of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Output format (each subcommand has its own default).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigendecomposition of a symmetric matrix.
    Eig(EigArgs),
    /// α-separated partition of a spectrum.
    Partition(PartitionArgs),
    /// Frequency response of a filter on a spectrum.
    FilterResponse(FilterResponseArgs),
    /// Forward pass of a network from parameter, matrix and signal files.
    NnForward(NnForwardArgs),
    /// Eigenvalue shifts under a perturbation against its norm.
    WeylCheck(WeylCheckArgs),
    /// Eigenspace rotation under a perturbation against the sin-θ bound.
    DkCheck(DkCheckArgs),
    /// Log-log growth rate of a spectrum, and the gap index of a manifold.
    WeylLaw(WeylLawArgs),
    /// Randomized filter stability trials against the filter bound.
    FilterStability(StabilityArgs),
    /// Randomized network stability trials against the network bound.
    NnStability(StabilityArgs),
    /// Power-allocation experiment.
    #[command(subcommand)]
    Wireless(WirelessCommand),
}

#[derive(Debug, Args, Serialize)]
struct EigArgs {
    /// Matrix file (CSV or JSON).
    #[arg(long)]
    matrix: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PartitionArgs {
    /// Sorted eigenvalue file (CSV column or row, or JSON array).
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    eigenvalues: Option<PathBuf>,
    /// Matrix whose eigenvalues are partitioned.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    alpha: f64,
}

#[derive(Debug, Args, Serialize)]
struct FilterResponseArgs {
    /// Filter JSON: `{"coeffs": [...]}`, a response `{"kind": ...}`, or an FDT spec.
    #[arg(long)]
    filter: PathBuf,
    /// Sorted eigenvalue file.
    #[arg(long)]
    eigenvalues: PathBuf,
    /// Turn a polynomial or response into an α-FDT filter on these eigenvalues.
    #[arg(long)]
    alpha: Option<f64>,
    /// Also sample the response on this many evenly spaced points.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct NnForwardArgs {
    /// Network parameters JSON.
    #[arg(long)]
    params: PathBuf,
    /// Operator matrix file.
    #[arg(long)]
    matrix: PathBuf,
    /// Input signal: n rows, one column per input feature.
    #[arg(long)]
    signal: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct WeylCheckArgs {
    /// Operator matrix (single check).
    #[arg(long, required_unless_present = "config")]
    matrix: Option<PathBuf>,
    /// Perturbation matrix; otherwise a seeded random one of norm `--epsilon`.
    #[arg(long)]
    perturbation: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Randomized trial config (runs a batch instead of a single check).
    #[arg(long, conflicts_with = "matrix")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct DkCheckArgs {
    #[arg(long, required_unless_present = "config")]
    matrix: Option<PathBuf>,
    #[arg(long)]
    perturbation: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Eigen index range `start:end` (end exclusive).
    #[arg(long)]
    cluster: Option<String>,
    /// Pick the α-cluster containing `--index` instead of `--cluster`.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    index: Option<usize>,
    #[arg(long, conflicts_with = "matrix")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct WeylLawArgs {
    /// Cycle graph with this many nodes.
    #[arg(long)]
    cycle: Option<usize>,
    /// Torus grid `NXxNY`.
    #[arg(long)]
    torus: Option<String>,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    eigenvalues: Option<PathBuf>,
    #[arg(long)]
    k_lo: Option<usize>,
    #[arg(long)]
    k_hi: Option<usize>,
    /// Gap index inputs: manifold dimension.
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    volume: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct StabilityArgs {
    /// Trial config JSON, or a previous report to replay.
    #[arg(long)]
    config: PathBuf,
    /// Also write the JSON summary here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum WirelessCommand {
    /// Train one policy per configured (layers, features).
    Train(WirelessTrainArgs),
    /// Evaluate trained policies under channel perturbation.
    Eval(WirelessEvalArgs),
}

#[derive(Debug, Args, Serialize)]
struct WirelessTrainArgs {
    /// Experiment config JSON (defaults fill missing fields), or a report to replay.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct WirelessEvalArgs {
    /// Output of `wireless train`.
    #[arg(long, required_unless_present = "config")]
    run: Option<PathBuf>,
    /// Train from this config first, then evaluate.
    #[arg(long, conflicts_with = "run")]
    config: Option<PathBuf>,
    /// Also write the CSV gap table here.
    #[arg(long)]
    gap_table: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(fdtnet::Error),
}

impl From<fdtnet::Error> for CliError {
    fn from(e: fdtnet::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let sink = |default: Format| Sink {
        path: cli.output.clone(),
        format: cli.format.unwrap_or(default),
    };
    match &cli.command {
        Command::Eig(a) => commands::eig(a, &sink(Format::Json)),
        Command::Partition(a) => commands::partition(a, &sink(Format::Json)),
        Command::FilterResponse(a) => commands::filter_response(a, &sink(Format::Csv)),
        Command::NnForward(a) => commands::nn_forward(a, &sink(Format::Csv)),
        Command::WeylCheck(a) => commands::weyl_check(a, cli.seed, &sink(Format::Json)),
        Command::DkCheck(a) => commands::dk_check(a, cli.seed, &sink(Format::Json)),
        Command::WeylLaw(a) => commands::weyl_law(a, &sink(Format::Json)),
        Command::FilterStability(a) => commands::stability(a, false, cli.seed, &sink(Format::Csv)),
        Command::NnStability(a) => commands::stability(a, true, cli.seed, &sink(Format::Csv)),
        Command::Wireless(WirelessCommand::Train(a)) => {
            commands::wireless_train(a, cli.seed, &sink(Format::Json))
        }
        Command::Wireless(WirelessCommand::Eval(a)) => {
            commands::wireless_eval(a, cli.seed, &sink(Format::Json))
        }
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
