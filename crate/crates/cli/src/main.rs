//! `hexmort` command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 configuration or schema error,
//! 3 I/O or unreadable input, 4 geometry, layout or unknown region,
//! 5 model fitting (empty cohort, no converged fit).

mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use hexmort::Error;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::SchemaMismatch(_) => 2,
        Error::Io { .. } | Error::Data { .. } => 3,
        Error::Geometry(_) | Error::UnknownRegion(_) | Error::Layout(_) => 4,
        Error::Model(_) => 5,
        Error::Contract(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = config::Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hexmort: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
