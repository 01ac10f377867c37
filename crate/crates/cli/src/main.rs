use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isac_cli::commands::{self, Options};
use isac_cli::config::RunConfig;
use isac_cli::CliError;
use isac_core::optimizer::Scheme;

#[derive(Parser)]
#[command(name = "isac", version, about = "UAV trajectory and scheduling design under on-demand sensing constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reference-point file written by `refpoints`.
    #[arg(long, global = true)]
    refpoints: Option<PathBuf>,
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated CRB limits in m².
    #[arg(long, global = true, value_delimiter = ',')]
    sweep_xil: Vec<f64>,
    /// Grid cells per disc diameter for `evaluate`.
    #[arg(long, global = true, default_value_t = 113)]
    grid: usize,
    /// Trajectory CSV for `evaluate` (default: <out>/trajectory.csv).
    #[arg(long, global = true)]
    trajectory: Option<PathBuf>,
    /// Audit tolerance as a multiple of the CRB limit.
    #[arg(long, global = true, default_value_t = 1.01)]
    tolerance: f64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Deployment region and its boundary.
    Characterize,
    /// Discover reference target points.
    Refpoints,
    /// Feasibility search and optimization with the selected scheme.
    Optimize,
    /// All three schemes on one reference set.
    Benchmark,
    /// Dense-grid CRB audit of a trajectory.
    Evaluate,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.scheme {
        cfg.scheme = s;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    let opts = Options {
        out: cfg.out.clone(),
        refpoints: cli.refpoints,
        trajectory: cli.trajectory,
        sweep_xil: cli.sweep_xil,
        grid: cli.grid,
        tolerance: cli.tolerance,
    };
    match cli.command {
        Command::Characterize => commands::characterize(&cfg, &opts),
        Command::Refpoints => commands::refpoints(&cfg, &opts),
        Command::Optimize => commands::optimize(&cfg, &opts),
        Command::Benchmark => commands::benchmark(&cfg, &opts),
        Command::Evaluate => commands::evaluate(&cfg, &opts),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("isac: {e}");
            e.exit_code()
        }
    }
}
