//! `windline`: batch front end for profile synthesis, binary sequences,
//! spectra handling, fitting and the HTTP service.

// `!(a < b)` is used on purpose so NaN fails every range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use windline_core::ModelError;

use commands::Cli;

/// Exit status for an error, by the first recognizable cause in its chain.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return match e {
                ModelError::Io(_) => 3,
                ModelError::Numeric(_) | ModelError::Integration { .. } => 4,
                ModelError::Json(j) if j.is_io() => 3,
                _ => 2,
            };
        }
        if let Some(j) = cause.downcast_ref::<serde_json::Error>() {
            return if j.is_io() { 3 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<commands::UsageError>().is_some() {
            return 2;
        }
    }
    4
}

fn main() -> ExitCode {
    let version: &'static str = Box::leak(
        format!("{} (numeric fingerprint {})", env!("CARGO_PKG_VERSION"), windline_core::numeric_fingerprint())
            .into_boxed_str(),
    );
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
