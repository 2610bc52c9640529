use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod verify;

/// Closed-form active subspaces of MARS surrogates.
#[derive(Parser, Debug)]
#[command(name = "activemars", version, about)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "ACTIVEMARS_THREADS")]
    threads: Option<usize>,

    /// Record wall time in the manifest of each output file.
    #[arg(long, global = true)]
    record_timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a MARS surrogate to a CSV dataset (inputs, then response).
    Fit(FitArgs),
    /// Compute the expected gradient outer product of a model under a prior.
    ComputeC(ComputeArgs),
    /// Eigendecompose a matrix file, choose a dimension, score inputs.
    Subspace(SubspaceArgs),
    /// Approximate a linearly constrained region by weighted boxes.
    Partition(PartitionArgs),
    /// Check the closed form against quadrature and Monte Carlo.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// CSV with p input columns and a trailing response column. A
    /// non-numeric first row is treated as a header.
    pub data: PathBuf,
    #[arg(long, default_value_t = 41)]
    pub max_basis: usize,
    #[arg(long, default_value_t = 3)]
    pub max_interaction: usize,
    /// Knot candidates per input.
    #[arg(long, default_value_t = 64)]
    pub knot_grid: usize,
    /// Rescale each input column onto [0, 1] before fitting.
    #[arg(long, conflicts_with = "whiten")]
    pub unit_scale: bool,
    /// Gaussian prior file; inputs are whitened against it, then rescaled.
    #[arg(long, value_name = "PRIOR")]
    pub whiten: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ComputeArgs {
    pub model: PathBuf,
    pub prior: PathBuf,
    /// Recompute integrals per entry instead of caching them.
    #[arg(long, conflicts_with = "hadamard_eps")]
    pub low_memory: bool,
    /// Assemble with regularized division by this epsilon.
    #[arg(long)]
    pub hadamard_eps: Option<f64>,
    /// Coordinates of the output matrix: native or unit.
    #[arg(long, default_value = "native", value_parser = ["native", "unit"])]
    pub scale: String,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the raw matrix as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DimArg {
    Auto,
    Fixed(usize),
}

fn parse_dim(s: &str) -> Result<DimArg, String> {
    if s == "auto" {
        return Ok(DimArg::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) => Err("dimension must be at least 1".into()),
        Ok(k) => Ok(DimArg::Fixed(k)),
        Err(_) => Err(format!("expected `auto` or a positive integer, got `{s}`")),
    }
}

#[derive(Args, Debug)]
pub struct SubspaceArgs {
    pub cmatrix: PathBuf,
    /// `auto` (largest spectral gap) or a fixed dimension.
    #[arg(long, default_value = "auto", value_parser = parse_dim)]
    pub dim: DimArg,
    /// Choose the smallest dimension holding this fraction of the trace.
    #[arg(long, conflicts_with = "dim")]
    pub energy: Option<f64>,
    /// Compute activity scores over the chosen dimension.
    #[arg(long)]
    pub activity: bool,
    /// Divide activity scores by their maximum.
    #[arg(long, requires = "activity")]
    pub normalize: bool,
    /// CSV of inputs (optionally with a trailing response) to project.
    #[arg(long, value_name = "DATA", requires = "projection_out")]
    pub project: Option<PathBuf>,
    /// Where to write projected coordinates.
    #[arg(long, requires = "project")]
    pub projection_out: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PartitionArgs {
    pub constraints: PathBuf,
    /// Smallest box volume kept; several comma-separated values print a
    /// coverage ladder and the last one is written.
    #[arg(long, value_delimiter = ',', default_value = "1e-12")]
    pub min_volume: Vec<f64>,
    /// Inputs to bisect, cycled by depth (default: all).
    #[arg(long, value_delimiter = ',')]
    pub split_dims: Option<Vec<usize>>,
    /// Output prior file (mixture of uniform boxes).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the boxes with their weights.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub model: PathBuf,
    pub prior: PathBuf,
    /// Check this matrix file instead of recomputing the closed form.
    #[arg(long)]
    pub cmatrix: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Pass threshold in Monte Carlo standard errors.
    #[arg(long, default_value_t = 3.0)]
    pub max_se: f64,
    /// Largest allowed Frobenius gap to quadrature.
    #[arg(long, default_value_t = 1e-6)]
    pub quad_gap: f64,
    /// Skip quadrature even when p <= 8.
    #[arg(long)]
    pub no_quad: bool,
    /// Write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Shared per-run settings.
pub struct Ctx {
    pub record_timing: bool,
    pub start: std::time::Instant,
}

/// A verification that ran and failed.
#[derive(Debug)]
pub struct VerificationFailed;

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("verification failed")
    }
}

impl std::error::Error for VerificationFailed {}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "thread count must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let ctx = Ctx {
        record_timing: cli.record_timing,
        start: std::time::Instant::now(),
    };
    match &cli.command {
        Command::Fit(a) => commands::fit(&ctx, a),
        Command::ComputeC(a) => commands::compute_c(&ctx, a),
        Command::Subspace(a) => commands::subspace(&ctx, a),
        Command::Partition(a) => commands::partition(&ctx, a),
        Command::Verify(a) => verify::verify(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<VerificationFailed>() => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
