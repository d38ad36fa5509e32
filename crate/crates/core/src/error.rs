use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("shape error: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("degenerate weights: every loss is at or below eta")]
    DegenerateWeights,

    /// A non-finite objective or gradient; `trace` holds every completed
    /// iteration.
    #[error("training aborted at iteration {iteration}: {message}")]
    Aborted {
        iteration: usize,
        message: String,
        trace: Box<crate::train::TrainTrace>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a human-readable location such as a repeat or grid cell.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure during computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self.root(),
            Error::Schema(_)
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::Split(_)
                | Error::Shape { .. }
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
