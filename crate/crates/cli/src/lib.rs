//! Experiment harness around `tbeam-core`: config parsing, runs, output files.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use thiserror::Error;

pub use commands::Command;
pub use config::{parse_config, ExperimentConfig};
pub use output::Summary;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<tbeam_core::Error> for CliError {
    fn from(e: tbeam_core::Error) -> Self {
        use tbeam_core::Error as E;
        match e {
            E::InvalidParameter { .. } | E::OutOfDomain { .. } | E::DimensionMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

/// Reads the config file and runs `command`, writing into `out`.
pub fn run(command: Command, config_path: &Path, out: &Path) -> Result<Summary, CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", config_path.display())))?;
    let cfg = parse_config(&text)?;
    commands::execute(command, &cfg, out)
}
