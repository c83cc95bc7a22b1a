use thiserror::Error;

/// Crate-wide error type.
///
/// `Config` and `Parse` indicate bad user input (configs, manifests); the CLI
/// maps them to exit code 2. Everything else is a runtime failure (exit 1).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("non-finite gradient for parameter '{0}': step refused")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, step {step}: training aborted")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_)
        )
    }
}
