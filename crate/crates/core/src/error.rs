//! Error type shared by the whole toolkit.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, AuditError>;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// CSV cell that failed to parse; `row` is the 1-based data-row index
    /// (the header is not counted).
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("insufficient population: {0}")]
    InsufficientPopulation(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl AuditError {
    /// Short machine-parsable category tag, used by the CLI's
    /// `error:<category>:` diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            AuditError::InvalidArgument(_) => "invalid-argument",
            AuditError::Io { .. } => "io",
            AuditError::Parse { .. } => "parse",
            AuditError::Schema(_) => "schema",
            AuditError::EmptyDataset(_) => "empty-dataset",
            AuditError::ShapeMismatch(_) => "shape-mismatch",
            AuditError::InvalidLabel(_) => "invalid-label",
            AuditError::InsufficientPopulation(_) => "insufficient-population",
            AuditError::ArchitectureMismatch(_) => "architecture-mismatch",
            AuditError::DegenerateInput(_) => "degenerate-input",
            AuditError::InconsistentInputs(_) => "inconsistent-inputs",
            AuditError::Numerical(_) => "numerical",
            AuditError::Serialization(_) => "serialization",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AuditError::Io {
            path: path.into(),
            source,
        }
    }
}
