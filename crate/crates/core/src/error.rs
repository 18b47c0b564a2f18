use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched shapes or invalid hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed dataset file or row.
    #[error("ingestion error{}: {message}", location(*.row, *.offset))]
    Ingest {
        row: Option<usize>,
        offset: Option<u64>,
        message: String,
    },

    /// NaN or infinity produced by a forward or backward pass.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("gradient check failed: {param} has relative error {error:.3e} (tolerance {tolerance:.1e})")]
    GradCheck {
        param: String,
        error: f64,
        tolerance: f64,
    },

    #[error("task {task}: {source}")]
    Task {
        task: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),

    /// A pipeline invariant (such as task data isolation) was broken.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

fn location(row: Option<usize>, offset: Option<u64>) -> String {
    match (row, offset) {
        (Some(r), Some(o)) => format!(" at row {r} (byte offset {o})"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(o)) => format!(" at byte offset {o}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_task(self, task: usize) -> Self {
        Error::Task {
            task,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (configs, dataset files) as
    /// opposed to failures during training.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::Ingest { .. } | Error::Serde(_) => true,
            Error::Task { source, .. } => source.is_user_error(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
