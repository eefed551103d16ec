use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code classes:
/// `Usage`/`Config` are caller mistakes, `Parse`/`Schema`/`Validation`/
/// `Dimension` are data errors, `UndefinedMetric` aborts evaluation when a
/// test set has only one class.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("validation error for {entity}: {message}")]
    Validation { entity: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            entity: entity.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
