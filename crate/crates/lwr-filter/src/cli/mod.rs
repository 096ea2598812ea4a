//! Command-line layer: configuration schemas, command implementations,
//! and result writers. The binary in `main.rs` stays a thin argument
//! parser over these.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

pub use commands::{RunContext, cmd_compare_models, cmd_experiment_mixture, cmd_filter, cmd_simulate};
pub use config::{
    CompareConfig, CsvSource, FdConfig, FilterParams, FilterRunConfig, FilterSource, Manifest,
    MixtureConfig, ModelSection, PriorConfig, SimulateConfig, SyntheticSource, load_config,
};

/// Command-level failures, split by exit code: I/O and parsing problems
/// exit 1, physics and configuration violations exit 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("ingestion error: {0}")]
    Ingest(crate::scenarios::IngestError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("physics violation: {0}")]
    Physics(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Parse(_) | CliError::Ingest(_) => 1,
            CliError::Config(_) | CliError::Physics(_) => 2,
        }
    }
}
