//! `clockopt` command-line driver.

mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::FileConfig;
use output::Emitter;

/// Why a run stopped; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or configuration (exit 2).
    Usage(String),
    /// A numerical check failed or a computation was refused (exit 1).
    Check(String),
    /// Artifacts could not be written (exit 1).
    Io(String),
}

impl From<clockopt_core::Error> for Failure {
    fn from(e: clockopt_core::Error) -> Self {
        use clockopt_core::Error as E;
        match e {
            E::Config(_) | E::Domain { .. } | E::Tree(_) => Failure::Usage(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

/// Resolved inputs shared by every command.
pub struct Ctx {
    pub seed: u64,
    pub file: FileConfig,
    pub out: Emitter,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let file = FileConfig::load(cli.common.config.as_deref())?;
    let ctx = Ctx {
        seed: cli.common.seed.or(file.seed).unwrap_or(1),
        file,
        out: Emitter {
            dir: cli.common.output_dir,
            format: cli.common.format,
        },
    };
    match cli.command {
        Command::Specfun(c) => commands::specfun::run(&ctx, c),
        Command::Ou(c) => commands::ou::run(&ctx, c),
        Command::Tree(c) => commands::tree::run(&ctx, c),
        Command::Logou(c) => commands::logou::run(&ctx, c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
