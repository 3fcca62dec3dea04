use serde::Serialize;
use thiserror::Error;

/// Failure category shared by every engine operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorKind {
    InsufficientData,
    InvalidConfig,
    UnstableQueue,
    NoFeasiblePods,
    IoFailure,
    DegenerateSeries,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::InsufficientData => "INSUFFICIENT_DATA",
            ErrorKind::InvalidConfig => "INVALID_CONFIG",
            ErrorKind::UnstableQueue => "UNSTABLE_QUEUE",
            ErrorKind::NoFeasiblePods => "NO_FEASIBLE_PODS",
            ErrorKind::IoFailure => "IO_FAILURE",
            ErrorKind::DegenerateSeries => "DEGENERATE_SERIES",
        }
    }
}

impl std::fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("{kind}: {detail}")]
pub struct EngineError {
    pub kind: ErrorKind,
    pub detail: String,
}

impl EngineError {
    pub fn new(kind: ErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }

    pub fn insufficient_data(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::InsufficientData, detail)
    }

    pub fn invalid_config(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::InvalidConfig, detail)
    }

    pub fn unstable_queue(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::UnstableQueue, detail)
    }

    pub fn no_feasible_pods(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::NoFeasiblePods, detail)
    }

    pub fn io_failure(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::IoFailure, detail)
    }

    pub fn degenerate_series(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::DegenerateSeries, detail)
    }

    /// Single-line JSON object `{"kind": ..., "detail": ...}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"kind\":\"{}\"}}", self.kind))
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;
