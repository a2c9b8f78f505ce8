use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: field `{field}`: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        field: String,
        msg: String,
    },

    #[error("invalid `{field}`: {msg}")]
    Invalid { field: String, msg: String },

    #[error("device `{0}` has no readings")]
    EmptySeries(String),

    #[error("single class: {0}")]
    SingleClass(String),

    #[error("no vertical pair: no two devices differ in height by more than 1 m")]
    NoVerticalPair,

    #[error("degenerate horizontal layout: {0}")]
    DegenerateHorizontal(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the data itself being unusable for
    /// training (as opposed to malformed input or flags).
    pub fn is_degenerate_data(&self) -> bool {
        matches!(
            self,
            Error::SingleClass(_) | Error::EmptySeries(_) | Error::UndefinedCorrelation(_)
        )
    }
}
