use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// One rejected config field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("config is not valid JSON for the schema: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid config: {}", join(.0))]
    Invalid(Vec<FieldError>),

    #[error(transparent)]
    Core(#[from] dem_core::Error),

    #[error("output error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{failed} of {total} runs failed; see the report for details")]
    RunsFailed { failed: usize, total: usize },
}

impl HarnessError {
    /// Config and usage problems map to 1, everything that went wrong
    /// while running maps to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Read { .. } | HarnessError::Parse(_) | HarnessError::Invalid(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
