use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes. The CLI maps these onto exit codes and the
/// service onto HTTP status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    Input,
    Parse,
    Provider,
    State,
    NotFound,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("parse error in {source_name} at {location}: {message}")]
    Parse {
        source_name: String,
        /// "line L, column C" for JSON, "line L (byte B)" for CSV.
        location: String,
        message: String,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("shape mismatch: expected {expected} dims, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("similarity undefined for an empty embedding")]
    UndefinedSimilarity,

    #[error("provider error ({provider}, batch {batch}): {message}")]
    Provider {
        provider: String,
        batch: usize,
        message: String,
        /// Number of texts successfully embedded before the failure.
        completed: usize,
    },

    #[error("embedding cache entry {} invalid: {message}", path.display())]
    Cache { path: PathBuf, message: String },

    #[error("completion could not be parsed: {message}")]
    CompletionParse { message: String, raw: String },

    #[error("deposit model invalid: {0}")]
    Validation(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn not_found(msg: impl Into<String>) -> Self {
        Error::NotFound(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Input(_)
            | Error::Config(_)
            | Error::Ingest(_)
            | Error::Geometry(_)
            | Error::Shape { .. }
            | Error::UndefinedSimilarity
            | Error::Validation(_) => ErrorClass::Input,
            Error::Parse { .. } | Error::CompletionParse { .. } | Error::Json(_) => {
                ErrorClass::Parse
            }
            Error::Provider { .. } | Error::Cache { .. } => ErrorClass::Provider,
            Error::State(_) => ErrorClass::State,
            Error::NotFound(_) => ErrorClass::NotFound,
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    /// Stable machine-readable code used in JSON error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Input(_) => "invalid_input",
            Error::Config(_) => "config",
            Error::Ingest(_) => "ingest",
            Error::Parse { .. } => "parse",
            Error::State(_) => "invalid_state",
            Error::Geometry(_) => "geometry",
            Error::Shape { .. } => "shape_mismatch",
            Error::UndefinedSimilarity => "undefined_similarity",
            Error::Provider { .. } => "provider",
            Error::Cache { .. } => "cache",
            Error::CompletionParse { .. } => "completion_parse",
            Error::Validation(_) => "validation",
            Error::NotFound(_) => "not_found",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn from_json(source_name: &str, err: serde_json::Error) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            location: format!("line {}, column {}", err.line(), err.column()),
            message: err.to_string(),
        }
    }

    pub(crate) fn from_csv(source_name: &str, err: csv::Error) -> Self {
        let location = match err.position() {
            Some(pos) => format!("line {} (byte {})", pos.line(), pos.byte()),
            None => "unknown position".to_string(),
        };
        Error::Parse {
            source_name: source_name.to_string(),
            location,
            message: err.to_string(),
        }
    }
}
