use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// The input is valid in shape but the quantity is undefined on it
    /// (zero mean norm, zero row under a cosine, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Training stopped because the loss or a gradient went non-finite.
    #[error("numerical abort at iteration {iteration}: {reason}; last telemetry: {}", last_record.as_deref().unwrap_or("none"))]
    NumericalAbort {
        iteration: usize,
        reason: String,
        last_record: Option<String>,
    },
    /// Malformed file contents. `location` names a line or byte offset.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by the numbers rather than by the inputs'
    /// structure. The CLI maps these to exit code 1.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::NumericalAbort { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
