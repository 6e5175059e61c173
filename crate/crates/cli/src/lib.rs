//! Command-line front end for `magtorus`: config handling, run directories
//! and the five verbs.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

pub use commands::{execute, ClassifyOptions};
pub use config::{Preset, RunConfig};
pub use error::CliError;

use std::path::Path;

/// `--config` wins over `--preset`; with neither, the default preset.
pub fn load_config(path: Option<&Path>, preset: Option<Preset>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text)
        }
        None => Ok(RunConfig::preset(preset.unwrap_or(Preset::Default))),
    }
}

/// Size of the worker pool from `MAGTORUS_WORKERS`, if set.
pub fn workers_from_env(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("MAGTORUS_WORKERS must be a positive integer, got {s:?}"))),
        },
    }
}
