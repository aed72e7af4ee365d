use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model, setup, descriptor or log could not be parsed.
    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    /// Parsed input violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// The two imaging planes do not span 3D space.
    #[error("degenerate imaging geometry (smallest singular value {smallest_singular_value:.3e})")]
    DegenerateGeometry { smallest_singular_value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The selected estimator lacks the observation it needs.
    #[error("missing observation: {0}")]
    MissingObservation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
