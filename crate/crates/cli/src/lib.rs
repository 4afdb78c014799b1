//! Command-line front end for `youla-lqg`: controller synthesis and certification, the two
//! optimization methods, data-driven estimation, and the example drivers.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "youla-lqg", version, about = "LQG synthesis, optimality certificates and Youla-parameter optimization")]
pub struct Cli {
    /// JSON file of parameters; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed for randomized estimators.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Progress messages on standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal LQG controller by the separation principle.
    SolveLqg(SolveLqgArgs),
    /// Global-optimality certificate of a controller.
    Certify(CertifyArgs),
    /// Gradient descent in the Youla parameter space.
    Optimize(OptimizeArgs),
    /// Policy gradient on the controller matrices.
    Pg(PgArgs),
    /// Rational fits of the nominal interconnection from frequency-response data.
    Identify(IdentifyArgs),
    /// Laguerre-basis estimate of the nominal sensitivity.
    EstimateS(EstimateSArgs),
    /// Zeroth-order estimate of the static gradient.
    EstimateResidue(EstimateResidueArgs),
    /// Convergence comparison on the two-state example plant.
    Example1(Example1Args),
    /// Data-driven estimation study on the two-state example plant.
    Example2(Example2Args),
}

#[derive(Debug, Args, Default)]
pub struct PlantArg {
    /// Plant JSON `{"A","B","C","Q","R","W","V"}`; the two-state example plant if omitted.
    #[arg(long)]
    pub plant: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveLqgArgs {
    #[command(flatten)]
    pub plant: PlantArg,
    /// Controller order (at least the plant order).
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub plant: PlantArg,
    /// Controller JSON `{"A_K","B_K","C_K"}`.
    #[arg(long)]
    pub controller: Option<PathBuf>,
    /// Bound on the normalized Markov norms.
    #[arg(long)]
    pub tol_markov: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub plant: PlantArg,
    #[arg(long)]
    pub controller: Option<PathBuf>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub trunc_tol: Option<f64>,
    /// Where to write the final controller (default `<out>/controller.json`).
    #[arg(long)]
    pub save_controller: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PgArgs {
    #[command(flatten)]
    pub plant: PlantArg,
    #[arg(long)]
    pub controller: Option<PathBuf>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Direct,
    Sine,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    #[arg(long)]
    pub grid_lo: Option<f64>,
    #[arg(long)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Log-spaced grid instead of linear.
    #[arg(long)]
    pub log_grid: Option<bool>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub plant: PlantArg,
    /// Starting controller (default `A_K = −0.5I`, `B_K = [0; 1]`, `C_K = [0, −1]`).
    #[arg(long)]
    pub controller: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Largest denominator degree tried per entry.
    #[arg(long)]
    pub max_den: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateSArgs {
    #[command(flatten)]
    pub plant: PlantArg,
    #[arg(long)]
    pub controller: Option<PathBuf>,
    #[arg(long)]
    pub laguerre_order: Option<usize>,
    #[arg(long)]
    pub pole: Option<f64>,
    /// Finite-difference step of the derivative-based coefficients.
    #[arg(long)]
    pub c_step: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct EstimateResidueArgs {
    #[command(flatten)]
    pub plant: PlantArg,
    #[arg(long)]
    pub controller: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Example1Args {
    #[command(flatten)]
    pub plant: PlantArg,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub pg_eta: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Example2Args {
    #[command(flatten)]
    pub plant: PlantArg,
    #[arg(long)]
    pub controller: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub laguerre_order: Option<usize>,
    #[arg(long)]
    pub pole: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Comma-separated sample sizes of the zeroth-order study.
    #[arg(long, value_delimiter = ',')]
    pub sample_sizes: Option<Vec<usize>>,
    /// Seeds per sample size.
    #[arg(long)]
    pub seeds: Option<usize>,
}

/// Parse-free entry point used by `main` and the tests.
pub fn run(cli: Cli) -> CliResult<()> {
    commands::dispatch(cli)
}
