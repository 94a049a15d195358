//! Batch front end: `simulate`, `pipeline`, `roll` and `export-graph`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult, ExitKind};

use crate::config::Settings;
use crate::manifest::RunManifest;

pub const THREADS_ENV: &str = "SPARSEVAR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sparsevar", version, about = "Sparse VAR connectedness networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommandArgs {
    /// Flat JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a stable sparse VAR and write a price panel plus its ground truth.
    Simulate(CommandArgs),
    /// Difference, impute, select, fit and write static connectedness tables.
    Pipeline(CommandArgs),
    /// Rolling-window connectedness series.
    Roll(CommandArgs),
    /// Network file from a connectedness table CSV.
    ExportGraph(CommandArgs),
}

impl CommandArgs {
    pub fn resolve(&self) -> CliResult<config::RunConfig> {
        let base = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        base.overridden_by(&self.settings).resolve()
    }
}

/// Sizes the global worker pool from `SPARSEVAR_THREADS`, if set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::input(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::numeric(format!("cannot size the worker pool: {e}")))
}

pub fn run(cli: &Cli) -> CliResult<RunManifest> {
    let (args, f): (&CommandArgs, fn(&config::RunConfig) -> CliResult<RunManifest>) = match &cli.command {
        Command::Simulate(a) => (a, commands::simulate),
        Command::Pipeline(a) => (a, commands::pipeline),
        Command::Roll(a) => (a, commands::roll),
        Command::ExportGraph(a) => (a, commands::export_graph),
    };
    f(&args.resolve()?)
}
