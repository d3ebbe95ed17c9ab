//! `optomech` command-line front end.
//!
//! Each subcommand reads a JSON config and writes CSV or JSON artifacts into
//! `--out`. Exit codes: 0 ok, 2 config, 3 numerical, 4 I/O.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::Out;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(name = "optomech", version, about = "Linear ultrastrong-coupling cavity optomechanics")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the seed in the config (simulate only).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,

    /// Worker threads; 0 or unset uses all cores.
    #[arg(long, env = "OPTOMECH_THREADS", global = true, hide_env_values = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Analytic mechanical (and cavity) spectra.
    Psd,
    /// Polariton branches along a detuning sweep.
    Polaritons,
    /// Stability map and boundary.
    Stability,
    /// Coupling rates of a physical setup and the displacement profile.
    Coupling,
    /// Langevin time traces and their Welch spectra.
    Simulate,
    /// Fit spectra for the coupling rate.
    Fit,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads.filter(|n| *n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut out = Out::new(cli.out.clone(), cli.format)?;
    match cli.command {
        Command::Psd => commands::psd(config::load(path)?, &mut out)?,
        Command::Polaritons => commands::polaritons(config::load(path)?, &mut out)?,
        Command::Stability => commands::stability(config::load(path)?, &mut out)?,
        Command::Coupling => commands::coupling(config::load(path)?, &mut out)?,
        Command::Simulate => commands::simulate(config::load(path)?, cli.seed, &mut out)?,
        Command::Fit => {
            let base = path.parent().unwrap_or(Path::new("."));
            commands::fit(config::load(path)?, base, &mut out)?
        }
    }
    Ok(out.written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("optomech: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
