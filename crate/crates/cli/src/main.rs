mod commands;
mod config;
mod csvio;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::commands::Outputs;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Forward,
    Sensitivity,
    Adjoint,
    Optimize,
    Verify,
}

/// Forward, sensitivity, adjoint and optimization runs for viscous damage
/// models with fatigue.
#[derive(Debug, Parser)]
#[command(name = "hevi", version)]
struct Cli {
    command: Command,
    /// TOML run configuration; the built-in 4-node two-field instance if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Control CSV (`n_steps` rows).
    #[arg(long)]
    ell: Option<PathBuf>,
    /// Control perturbation CSV for `sensitivity`.
    #[arg(long)]
    dell: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::builtin(),
    };
    if let Ok(seed) = std::env::var("EVI_SEED") {
        cfg.seed = seed
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("EVI_SEED must be an unsigned integer, got {seed:?}")))?;
    }
    if cli.command == Command::Verify {
        let mut out = cli.out_dir.as_deref().map(Outputs::new).transpose()?;
        let body = commands::verify(&cfg, out.as_mut())?;
        print!("{body}");
        return Ok(());
    }
    let mut out = Outputs::new(cli.out_dir.as_deref().unwrap_or(std::path::Path::new(".")))?;
    match cli.command {
        Command::Forward => commands::forward(&cfg, cli.ell.as_deref(), &mut out)?,
        Command::Sensitivity => commands::sensitivity(&cfg, cli.ell.as_deref(), cli.dell.as_deref(), &mut out)?,
        Command::Adjoint => commands::adjoint(&cfg, cli.ell.as_deref(), &mut out)?,
        Command::Optimize => commands::optimize(&cfg, cli.ell.as_deref(), &mut out)?,
        Command::Verify => unreachable!(),
    }
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
