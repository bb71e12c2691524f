//! `riscal`: experiment harness around the calibration/positioning core.
//! Subcommands reproduce the bound heat maps, RIS-size sweeps, single
//! estimation runs, Monte Carlo user sweeps, and initialization cost
//! surfaces; results go to standard output or `--out` as CSV/JSON.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ScenarioConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Estimation(String),
    #[error("{0}")]
    Singular(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Singular(_) => 4,
            CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}

/// Shared command inputs after flag resolution.
pub struct RunContext {
    pub config: ScenarioConfig,
    pub out: Option<PathBuf>,
    pub zero_noise: bool,
    pub full_fidelity: bool,
}

#[derive(Parser)]
#[command(
    name = "riscal",
    version,
    about = "Joint RIS calibration and user positioning: bounds and estimation experiments"
)]
struct Cli {
    /// Scenario TOML; defaults to the built-in reference scenario
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write results to this file instead of standard output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Synthesize measurements without noise
    #[arg(long, global = true)]
    zero_noise: bool,
    /// Run heat maps at the full configured sounding budget
    #[arg(long, global = true)]
    full_fidelity: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower-bound heat map over user positions at the configured height
    BoundsMap {
        #[arg(long, default_value_t = 50)]
        grid_nx: usize,
        #[arg(long, default_value_t = 50)]
        grid_ny: usize,
    },
    /// Bounds vs RIS element count with known-state variants
    BoundsVsRisSize {
        /// Comma-separated perfect-square element counts
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// One synthesize-initialize-refine run, JSON out
    Estimate,
    /// Monte Carlo bounds and estimator RMSE vs number of users
    McSweepUsers {
        /// Comma-separated user counts
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<usize>>,
        /// Trials per user count (defaults to the config's trial count)
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Initialization cost surface Δ(d0, o3) for one user
    CostSurface {
        /// User position as x,y,z (defaults to the configured user)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        user: Option<Vec<f64>>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::reference(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let ctx = RunContext {
        config,
        out: cli.out,
        zero_noise: cli.zero_noise,
        full_fidelity: cli.full_fidelity,
    };
    match cli.command {
        Command::BoundsMap { grid_nx, grid_ny } => commands::bounds_map(&ctx, grid_nx, grid_ny),
        Command::BoundsVsRisSize { sizes } => commands::bounds_vs_ris_size(&ctx, sizes),
        Command::Estimate => commands::estimate(&ctx),
        Command::McSweepUsers { users, trials } => commands::mc_sweep_users(&ctx, users, trials),
        Command::CostSurface { user } => commands::cost_surface(&ctx, user),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
