use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or size mismatch between operands.
    #[error("dimension error: {0}")]
    Dim(String),

    /// A parameter is outside its documented range.
    #[error("parameter error: {0}")]
    Param(String),

    /// Input values violate a domain precondition (negative, non-finite, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A transform is not applicable to the given shape.
    #[error("configuration error: {0}")]
    Config(String),

    /// Training diverged (non-finite loss).
    #[error("training error: {0}")]
    Train(String),

    /// A persisted artifact failed validation; names the offending field.
    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    /// A required upstream artifact does not exist yet.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
