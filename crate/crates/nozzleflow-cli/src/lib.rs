//! Command-line front end: configuration, dispatch and artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::Parser;

pub use commands::Command;
pub use config::RunConfig;
pub use error::CliError;

pub const THREADS_ENV: &str = "NOZZLEFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nozzleflow", version, about = "Transonic nozzle flow solvers")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Criteria to run with `validate`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<usize>,
}

/// Caps the global pool from the environment.
pub fn init_threads(var: Option<String>) -> Result<(), CliError> {
    let Some(v) = var else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| CliError::Threads(v.clone()))?;
    if n == 0 {
        return Err(CliError::Threads(v));
    }
    // A pool already built by an earlier call in the same process is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    init_threads(std::env::var(THREADS_ENV).ok())?;
    let cfg = RunConfig::load(&cli.config, &cli.set)?;
    commands::run(cli.command, &cfg, &cli.only)
}
