use std::fmt;

use thiserror::Error;

/// One offending line in an ingested file.
#[derive(Debug, Clone, PartialEq)]
pub struct LineIssue {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn join_issues(issues: &[LineIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ingestion failed: {}", join_issues(.0))]
    Ingestion(Vec<LineIssue>),

    #[error("{0} out of range: {1}")]
    OutOfRange(&'static str, String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{what} hash mismatch: expected {expected}, found {found}")]
    HashMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
