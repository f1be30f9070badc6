use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid scale factor {factor}: {reason}")]
    InvalidScale { factor: f64, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient support: {0}")]
    InsufficientSupport(String),

    #[error("point behind camera (camera-frame z = {0})")]
    BehindCamera(f64),

    #[error("empty scene")]
    EmptyScene,

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unknown property `{0}`")]
    UnknownProperty(String),

    #[error("count mismatch: {0}")]
    CountMismatch(String),

    #[error("bad magic: {0}")]
    BadMagic(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::File { .. })
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
