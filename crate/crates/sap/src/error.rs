use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A record in a data file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record parsed but failed semantic validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// Model spec and parameters (or input) do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Weights file is corrupt or truncated.
    #[error("weights file error: {0}")]
    WeightsFormat(String),

    /// Weights file was written by an incompatible version.
    #[error("unsupported weights version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
