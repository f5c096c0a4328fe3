//! Command-line front end: simulation, pathwise fitting, tuning-parameter
//! selection, debiasing, Monte-Carlo studies and the energy application.
//!
//! Outputs are long-format CSV tables (plot-ready) plus a JSON run report
//! per command. Blocks are labelled 1-based in all outputs.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "funlasso", version, about = "Group-sparse regression for mixed functional covariates")]
struct Cli {
    /// Base RNG seed for anything stochastic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = available parallelism).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Solver movement tolerance per cycle.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,

    /// Solver cycle budget per fit.
    #[arg(long, global = true, default_value_t = 10_000)]
    max_iter: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectRule {
    Cv,
    Sigma,
    Bic,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Simulate(SimulateArgs),
    /// Fit the whole penalty path and emit block norms per grid value.
    Path(PathArgs),
    /// Full pipeline: path, tuning selection, optional projection and
    /// debiasing.
    Fit(FitArgs),
    /// Seeded support-recovery replications.
    Montecarlo(MonteCarloArgs),
    /// Appliances-energy application: ingest, fit, report selected blocks.
    Energy(EnergyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark design (1 or 2).
    #[arg(long)]
    example: u8,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
    /// File stem of the written dataset.
    #[arg(long, default_value = "sim")]
    stem: String,
}

#[derive(Args)]
struct GridArgs {
    /// Number of penalty-grid points.
    #[arg(long, default_value_t = 100)]
    n_r: usize,
    /// Ratio of the smallest to the largest grid value.
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// KKT tolerance as a fraction of r_max.
    #[arg(long, default_value_t = 1e-6)]
    kkt_tol_factor: f64,
}

#[derive(Args)]
struct PathArgs {
    /// Dataset manifest (TOML).
    #[arg(long)]
    data: PathBuf,
    /// Fit in the span of the first M basis elements.
    #[arg(long)]
    project: Option<usize>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "path")]
    stem: String,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset manifest (TOML).
    #[arg(long)]
    data: PathBuf,
    /// Tuning-parameter selection rule.
    #[arg(long, value_enum)]
    select: SelectRule,
    /// "auto" (penalized dimension selection) or an explicit dimension.
    #[arg(long)]
    project: Option<String>,
    /// Ridge-debias the selected blocks.
    #[arg(long, default_value_t = false)]
    debias: bool,
    /// Penalty constant of the dimension-selection criterion.
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    /// Significance level of the plug-in rule.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Ground-truth coefficient CSV for error reporting.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "fit")]
    stem: String,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// Number of replications.
    #[arg(long)]
    reps: usize,
    /// Benchmark design (1 or 2).
    #[arg(long)]
    example: u8,
    #[arg(long, value_enum)]
    select: SelectRule,
    /// Also fit the projected estimator with selected dimension.
    #[arg(long, default_value_t = false)]
    project: bool,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "montecarlo")]
    stem: String,
}

#[derive(Args)]
struct EnergyArgs {
    /// Raw 10-minute CSV (UCI appliances schema).
    #[arg(long)]
    raw: PathBuf,
    #[arg(long, default_value_t = 144)]
    samples_per_day: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "energy")]
    stem: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot configure {} threads: {e}", cli.threads);
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Simulate(args) => commands::simulate(&cli, args),
        Command::Path(args) => commands::path(&cli, args),
        Command::Fit(args) => commands::fit(&cli, args),
        Command::Montecarlo(args) => commands::montecarlo(&cli, args),
        Command::Energy(args) => commands::energy(&cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
