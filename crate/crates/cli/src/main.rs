use std::process::ExitCode;

use clap::Parser;
use compound_ppo_cli::{run, Cli, UsageError};

/// Exit status for bad flags, matching clap's own usage errors.
const USAGE_EXIT: u8 = 2;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(USAGE_EXIT)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
