//! `bnnprior`: densities, characteristic functions, moments, tail fits,
//! Monte Carlo runs and consistency checks from the command line.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error,
//! 3 numerical-accuracy failure.

mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use args::ParseOutcome;

fn main() -> ExitCode {
    let cli = match args::parse(std::env::args().collect()) {
        Ok(cli) => cli,
        Err(ParseOutcome::Clap(e)) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
        Err(ParseOutcome::Error(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
