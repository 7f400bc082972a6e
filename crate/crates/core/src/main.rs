use std::process::ExitCode;

use clap::Parser;
use finite_decoy::cli::{ERROR_EXIT_CODE, run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(ERROR_EXIT_CODE)
        }
    }
}
