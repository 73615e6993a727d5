//! `siqrb`: command-line front end for the delayed SIQRB toolkit.
//!
//! Exit codes: 0 success, 2 usage error, 3 input data error, 4 numerical
//! failure (blow-up, non-convergence, failed optimality check).

mod commands;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::{Artifacts, FileDigest, RunManifest};
use siqrb_core::io::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "siqrb", version, about = "Delayed SIQRB cholera model toolkit")]
pub struct Cli {
    /// Directory receiving CSV/JSON artifacts and the run manifest.
    #[arg(long, global = true, default_value = "siqrb-out")]
    pub out_dir: PathBuf,
    /// `key = value` parameter file; unset keys keep their reference values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Number of integration steps over the horizon (default: horizon / h).
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model and write the trajectory.
    Simulate(SimulateArgs),
    /// R0, disease-free and endemic equilibria.
    Equilibria,
    /// Local stability of an equilibrium; for the endemic point, a beta scan.
    Stability(StabilityArgs),
    /// Least-squares fit of (tau, delta, beta, alpha1) to incidence data.
    Fit(FitArgs),
    /// Optimal quarantine control.
    Optimize(OptimizeArgs),
    /// Check first-order optimality conditions for a stored control.
    Verify(VerifyArgs),
    /// Regenerate every table and figure dataset into one directory tree.
    ReproducePaper(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Euler,
    Rk4,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Horizon in days (overrides `T` from the config).
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Euler)]
    pub scheme: SchemeArg,
    /// Apply `u = u_max` up to this time and `u = 1` after it.
    #[arg(long, conflicts_with = "control")]
    pub switch: Option<f64>,
    /// Constant control level in `[1, u_max]`.
    #[arg(long)]
    pub control: Option<f64>,
    /// Write every n-th grid node.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EquilibriumArg {
    Dfe,
    Endemic,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long, value_enum, default_value_t = EquilibriumArg::Endemic)]
    pub equilibrium: EquilibriumArg,
    #[arg(long, default_value_t = 1e-6)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 5.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Incidence CSV with columns `t,I_obs`.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Preset weights: 1 → (W_I, W_B) = (1, 1), 2 → (10, 1), 3 → (1, 10).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub case: Option<u8>,
    #[arg(long)]
    pub wi: Option<f64>,
    #[arg(long)]
    pub wb: Option<f64>,
    #[arg(long)]
    pub wu: Option<f64>,
    #[arg(long)]
    pub umax: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    /// Projected gradient on per-step controls.
    Pg,
    /// Single-switch bang-bang search.
    Switch,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, value_enum, default_value_t = SolverArg::Pg)]
    pub solver: SolverArg,
    /// Scale `c` in the plotted `phi / (c W_u)`.
    #[arg(long, default_value_t = 1.0)]
    pub plot_scale: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iterations: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// CSV with `t` and `u` columns on the run grid (e.g. an `optimize` solution).
    #[arg(long)]
    pub solution: PathBuf,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Claimed optimal cost, checked against the recomputed value.
    #[arg(long)]
    pub cost: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Incidence CSV for the fitted-simulation step; skipped when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

/// Bad or missing user input (exit code 3).
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// Numerical failure detected after the artifacts were written (exit code 4).
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use siqrb_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidParameter { .. }
                | E::GridMisalignment { .. }
                | E::ControlOutOfBounds { .. }
                | E::GridMismatch(_)
                | E::InvalidInput(_)
                | E::Config { .. } => 3,
                _ => 4,
            };
        }
        if cause.is::<InputError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
        if cause.is::<NumericalFailure>() {
            return 4;
        }
    }
    4
}

fn load_config(cli: &Cli) -> Result<(RunConfig, Vec<FileDigest>)> {
    let Some(path) = &cli.config else {
        return Ok((RunConfig::default(), Vec::new()));
    };
    let bytes = std::fs::read(path)
        .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| InputError(format!("config {} is not UTF-8", path.display())))?;
    let cfg = RunConfig::parse(&text).with_context(|| format!("config {}", path.display()))?;
    Ok((
        cfg,
        vec![FileDigest {
            path: path.display().to_string(),
            sha256: manifest::digest(&bytes),
        }],
    ))
}

fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let (cfg, mut inputs) = load_config(cli)?;
    let mut arts = Artifacts::new(&cli.out_dir)?;
    let ctx = commands::Context {
        cfg,
        grid_points: cli.grid_points,
    };
    let (name, run) = match &cli.command {
        Command::Simulate(a) => ("simulate", commands::simulate(&ctx, a, &mut arts)),
        Command::Equilibria => ("equilibria", commands::equilibria(&ctx, &mut arts)),
        Command::Stability(a) => ("stability", commands::stability(&ctx, a, &mut arts)),
        Command::Fit(a) => ("fit", commands::fit(&ctx, a, &mut arts)),
        Command::Optimize(a) => ("optimize", commands::optimize(&ctx, a, &mut arts)),
        Command::Verify(a) => ("verify", commands::verify(&ctx, a, &mut arts)),
        Command::ReproducePaper(a) => ("reproduce-paper", commands::reproduce(&ctx, a, &mut arts)),
    };
    let report = run?;
    inputs.extend(report.inputs);
    let manifest = RunManifest {
        subcommand: name.to_string(),
        arguments: std::env::args().skip(1).collect(),
        resolved_config: report.resolved.to_text(),
        parameters: report.resolved,
        inputs,
        outputs: arts.into_outputs(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let path = cli.out_dir.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    match report.failure {
        Some(msg) => Err(NumericalFailure(msg).into()),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
