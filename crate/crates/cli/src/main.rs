//! `drift-ar`: estimate AR coefficients under an unknown dynamic drift.

mod args;
mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Failure classes of a run, mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or bad input data (exit code 2).
    Input(String),
    /// Anything else (exit code 1).
    Internal(String),
}

impl From<drift_ar::Error> for CliError {
    fn from(e: drift_ar::Error) -> Self {
        // Library errors are raised by parameter and data validation, or by
        // non-finite values that a well-posed input cannot produce.
        CliError::Input(e.to_string())
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DRIFT_AR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Input(format!(
            "DRIFT_AR_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|_| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}
