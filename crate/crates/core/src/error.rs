use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs whose shapes do not agree. `field` names the offending field path.
    #[error("shape mismatch at `{field}`: {message}")]
    Shape { field: String, message: String },

    /// A parameter outside its documented domain.
    #[error("invalid value for `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("series too short: need at least {needed} steps, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("undefined similarity: node {node} has an all-zero feature row")]
    UndefinedSimilarity { node: usize },

    #[error("disconnected snapshot: infected set splits into components {components:?}")]
    DisconnectedSnapshot { components: Vec<Vec<usize>> },

    #[error("transform {index} failed: {source}")]
    Transform {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no valid windows: {0}")]
    NoWindows(String),

    #[error("unknown dataset version `{0}`")]
    UnknownVersion(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn shape(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Shape {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn param(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Field path attached to the error, if any.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Shape { field, .. } | Error::InvalidParameter { field, .. } => Some(field),
            Error::Transform { source, .. } => source.field(),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
