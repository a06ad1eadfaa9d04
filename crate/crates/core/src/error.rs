use std::io;

/// Errors produced anywhere in the sensing, learning and analytics pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its invariants (e.g. a Nyquist violation).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument is malformed for the requested operation (shape, length, range).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A simulated scene is physically invalid (reflector out of range, empty script).
    #[error("invalid scene: {0}")]
    Scene(String),

    /// A label timeline does not cover the data it is supposed to annotate.
    #[error("label coverage: {0}")]
    Coverage(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged: {0}")]
    Training(String),

    /// A binary or text artifact is corrupt or has an unexpected layout.
    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
