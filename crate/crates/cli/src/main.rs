mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{CommandDefaults, ConfigKeys, SEED_ENV};
use crate::error::CliError;
use crate::output::{run_directory, Outputs};

/// Fidelity freeze in two-level bosonic k-body embedded ensembles.
#[derive(Parser)]
#[command(name = "bfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fidelity of a single realization.
    Trace(RunArgs),
    /// Ensemble-averaged fidelity with plateau and revival summary.
    Ensemble(RunArgs),
    /// Ensembles over a sweep of lambda or n, with power-law fits.
    Scaling(RunArgs),
    /// Ensemble with boosted couplings that move `dominant_c` bosons.
    Revival(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML file with any of the keys below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<unix time>-<seed>).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    keys: ConfigKeys,
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let (name, args, defaults) = match cli.command {
        Command::Trace(a) => ("trace", a, CommandDefaults::STANDARD),
        Command::Ensemble(a) => ("ensemble", a, CommandDefaults::STANDARD),
        Command::Scaling(a) => ("scaling", a, CommandDefaults::STANDARD),
        Command::Revival(a) => ("revival", a, CommandDefaults::REVIVAL),
    };
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {threads} worker threads: {e}")))?;
    }
    let keys = config::load(args.config.as_deref(), std::env::var(SEED_ENV).ok(), args.keys)?;
    let cfg = keys.resolve(defaults)?;

    let start = Instant::now();
    let mut out = Outputs::new(run_directory(args.output.as_deref(), cfg.ensemble.master_seed)?);
    match name {
        "trace" => commands::trace(&cfg, &mut out)?,
        "scaling" => commands::scaling(&cfg, &mut out)?,
        _ => commands::ensemble(&cfg, &mut out)?,
    }
    out.finish(name, &cfg, start.elapsed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bfl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
