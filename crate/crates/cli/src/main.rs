//! `capstokes` command-line driver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use capstokes::verify::Suite;
use clap::{Parser, Subcommand};
use thiserror::Error;

use commands::Flags;
use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("bound exceeded: {0}")]
    Bound(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Bound(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "capstokes",
    version,
    about = "Capillarity-driven Stokes flow over a graph interface"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve an initial profile and write its trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Check operator identities against their bounds.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Compare one-phase and two-phase runs over a list of outer viscosities.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Sample bulk velocity and pressure at given points.
    Fields {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CAPSTOKES_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "CAPSTOKES_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Simulate { config, out, quiet } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_simulate(&cfg, &Flags { out: &out, quiet })
        }
        Command::Verify {
            config,
            suite,
            out,
            quiet,
        } => {
            let suite: Suite = suite.parse().map_err(CliError::Usage)?;
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            commands::cmd_verify(cfg.as_ref(), suite, &Flags { out: &out, quiet })
        }
        Command::Sweep { config, out, quiet } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_sweep(&cfg, &Flags { out: &out, quiet })
        }
        Command::Fields { config, out, quiet } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_fields(&cfg, &Flags { out: &out, quiet })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capstokes: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
