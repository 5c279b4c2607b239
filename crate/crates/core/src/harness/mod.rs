//! Experiment orchestration: configuration loading, stack restriction,
//! agent and exhaustive search, log export.

pub mod config;
pub mod exhaustive;
pub mod export;
pub mod restrict;
pub mod search;

use std::path::Path;

use thiserror::Error;

use crate::schema::Schema;

pub use config::{Experiment, ExperimentConfig};
pub use exhaustive::{run_exhaustive, ExhaustiveResult, ExhaustiveRow, DEFAULT_NEAR_BAND};
pub use export::{best_config_report, convergence_rows, export, read_log, ExportFormat, ReportEntry};
pub use restrict::{restrict_schema, Mode, Restriction};
pub use search::{run_search, LogHeader, SearchLog, StepRecord, LOG_FILE, LOG_FORMAT, WALL_TIME_FILE};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration, fixture or argument.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Input(_) => 1,
            HarnessError::Runtime(_) | HarnessError::Io(_) => 2,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Input(e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

const BUILTIN_SCHEMAS: [(&str, &str); 2] = [
    ("table1", include_str!("../../fixtures/table1.json")),
    ("table4", include_str!("../../fixtures/table4.json")),
];

/// `table1`, `table4` or a schema file path.
pub fn resolve_schema(name_or_path: &str) -> Result<Schema, HarnessError> {
    let key = name_or_path.to_ascii_lowercase().replace([' ', '_', '-'], "");
    let key = key.strip_suffix(".json").unwrap_or(&key);
    let path = Path::new(name_or_path);
    if path.is_file() {
        return Schema::from_file(path).map_err(input);
    }
    if let Some((_, text)) = BUILTIN_SCHEMAS.iter().find(|(k, _)| *k == key) {
        return Ok(Schema::parse(text).expect("shipped schema is valid"));
    }
    Err(HarnessError::Input(format!("no schema named or found at `{name_or_path}`")))
}
