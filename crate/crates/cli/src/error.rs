use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown preset {0:?}; expected table1, table2 or pdn-trend")]
    UnknownPreset(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("malformed CSV {}: {reason}", path.display())]
    MalformedCsv { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Model(#[from] broodsize::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
