//! Command-line front end: simulate, equilibria, scan, verify.
//!
//! Exit codes: 0 success (for simulate: the expected outcome occurred),
//! 1 error or failed verification, 2 unexpected run outcome.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ebm2_core::Suite;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "ebm2", about = "Two-layer energy balance model toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides EBM2_OUT and the config's outputs.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for fan-out commands; 0 means automatic.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured initial state and write trajectory tables.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Replaces the seed of a random initial condition.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve for a stationary state and write its profile.
    Equilibria {
        #[command(flatten)]
        common: CommonArgs,
        /// warmest, coldest, or a path to a stored state file.
        #[arg(long, default_value = "warmest")]
        seed: String,
    },
    /// Re-run the configured scenario across a list of parameter values.
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        /// Replaces the seed of a random initial condition.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a named check suite and write the report.
    Verify {
        /// core, qualitative or all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Output directory for the CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 means automatic.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Shrinks every tolerance by this factor; > 1 makes checks stricter.
        #[arg(long, default_value_t = 1.0)]
        tighten: f64,
    },
}

/// Flag beats environment beats config.
fn resolve_out_dir(flag: Option<PathBuf>, config_dir: Option<&str>) -> PathBuf {
    flag.or_else(|| std::env::var_os("EBM2_OUT").map(PathBuf::from))
        .or_else(|| config_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn prepare_out_dir(flag: Option<PathBuf>, config_dir: Option<&str>) -> Result<PathBuf> {
    let dir = resolve_out_dir(flag, config_dir);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if jobs == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        pool.install(f)
    }
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common, seed } => {
            let config = RunConfig::load(&common.config)?;
            let out = prepare_out_dir(common.out, config.outputs.dir.as_deref())?;
            commands::cmd_simulate(&config, &out, seed)
        }
        Command::Equilibria { common, seed } => {
            let config = RunConfig::load(&common.config)?;
            let out = prepare_out_dir(common.out, config.outputs.dir.as_deref())?;
            commands::cmd_equilibria(&config, &out, &seed)
        }
        Command::Scan { common, seed } => {
            let config = RunConfig::load(&common.config)?;
            let out = prepare_out_dir(common.out, config.outputs.dir.as_deref())?;
            with_pool(common.jobs, || commands::cmd_scan(&config, &out, seed))
        }
        Command::Verify { suite, out, jobs, tighten } => {
            let suite: Suite = suite.parse()?;
            let out = prepare_out_dir(out, None)?;
            with_pool(jobs, || commands::cmd_verify(suite, tighten, &out))
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
