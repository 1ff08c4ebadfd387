//! Scenario runner for the key-rate library: configuration parsing, task
//! execution and CSV output.

pub mod config;
pub mod scenario;
pub mod table;
pub mod tasks;
pub mod verify;

use std::path::PathBuf;

pub use config::{parse_config, ConfigError};
pub use scenario::Scenario;
pub use table::{emit_csv, Cell, Table};
pub use tasks::{run_scenario, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("scenario `{name}`: {source}")]
    Scenario { name: String, source: qkd_core::Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

/// Process exit status for a failure.
pub const EXIT_VALIDATION: i32 = 1;
/// Process exit status when no evaluated point yields key.
pub const EXIT_INSECURE: i32 = 2;
/// Process exit status when a self-check fails.
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Read and parse a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    parse_config(&text).map_err(|e| CliError::Config { path: path.display().to_string(), source: e })
}
