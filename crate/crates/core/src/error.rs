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

    /// A dataset or sidecar record did not match its declared format.
    #[error("{origin}: field `{field}`: {message}")]
    Parse {
        origin: String,
        field: String,
        message: String,
    },

    #[error("sidecar {origin}: {message}")]
    Sidecar { origin: String, message: String },

    #[error("missing {what} for entity {entity} of document {doc_id}")]
    MissingEntityData {
        what: &'static str,
        doc_id: String,
        entity: String,
    },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("feature layout mismatch: checkpoint has {checkpoint}, run requests {requested}")]
    LayoutMismatch {
        checkpoint: String,
        requested: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, document {document}: loss = {loss}")]
    Diverged {
        epoch: usize,
        document: usize,
        loss: f64,
    },

    #[error("checkpoint {origin}: {message}")]
    Checkpoint { origin: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        origin: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            origin: origin.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn sidecar(origin: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Sidecar {
            origin: origin.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::LayoutMismatch { .. } => 1,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Sidecar { .. }
            | Error::MissingEntityData { .. }
            | Error::Checkpoint { .. } => 2,
            Error::Shape { .. } | Error::NonFinite(_) | Error::Diverged { .. } => 3,
        }
    }
}
