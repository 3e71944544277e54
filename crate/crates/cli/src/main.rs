//! `mind`: distributional distances between embedding sets.
//!
//! Exit codes: 0 success, 2 usage errors (unknown metric names included),
//! 3 file errors, 4 metric or experiment failures.

mod args;
mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mind_core::bench::TrackingAllocator;
use serde::de::DeserializeOwned;

use crate::args::{read_config, AttackArgs, BenchArgs, ComputeArgs, ConvertArgs, HarnessArgs, Merge};
use crate::failure::{code, Failure};

#[global_allocator]
static ALLOCATOR: TrackingAllocator = TrackingAllocator;

#[derive(Parser, Debug)]
#[command(name = "mind", version, about = "Distances between sets of embedding vectors")]
struct Cli {
    /// JSON settings file; flags given on the command line take precedence.
    /// A report written by this tool is accepted and its `config` reused.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Distance between the sets in `--a` and `--b`.
    Compute(ComputeArgs),
    /// Moment-matching attack of `--b` toward the data in `--a`.
    Attack(AttackArgs),
    /// Error probability of a statistical protocol over sample sizes.
    Harness(HarnessArgs),
    /// Walltime and peak memory over a grid of sizes.
    Bench(BenchArgs),
    /// Re-encode an embedding file.
    Convert(ConvertArgs),
}

fn with_file<T: Merge + Default + DeserializeOwned>(flags: T, config: &Option<PathBuf>) -> Result<T, Failure> {
    match config {
        Some(path) => Ok(flags.merge(read_config(path)?)),
        None => Ok(flags),
    }
}

fn threads_of(cmd: &Command) -> Option<usize> {
    match cmd {
        Command::Compute(a) => a.common.threads,
        Command::Attack(a) => a.common.threads,
        Command::Harness(a) => a.common.threads,
        Command::Bench(a) => a.common.threads,
        Command::Convert(a) => a.common.threads,
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(t) = threads_of(&cli.command) {
        if t == 0 {
            return Err(Failure::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| Failure::usage(e.to_string()))?;
    }
    match cli.command {
        Command::Compute(a) => commands::compute(with_file(a, &cli.config)?),
        Command::Attack(a) => commands::attack(with_file(a, &cli.config)?),
        Command::Harness(a) => commands::harness(with_file(a, &cli.config)?),
        Command::Bench(a) => commands::bench(with_file(a, &cli.config)?),
        Command::Convert(a) => commands::convert(with_file(a, &cli.config)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).target(env_logger::Target::Stderr).init();
    match run(cli) {
        Ok(()) => ExitCode::from(code::OK as u8),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
