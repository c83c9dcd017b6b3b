use thiserror::Error;

/// Errors produced by the toolkit.
///
/// The variants are grouped by how a caller should react: `InvalidArgument`
/// and `Config` are caller mistakes, `Data` means the inputs on disk are
/// inconsistent, `External` wraps subprocess failures, and `Stage` pins a
/// failure to its position inside a purifier pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("stage {index} failed: {source}")]
    Stage {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("external command failed: {0}")]
    External(String),

    #[error("{msg}: {source}")]
    Context {
        msg: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Attach a pipeline stage index to an error bubbling out of that stage.
    pub fn at_stage(self, index: usize) -> Self {
        Error::Stage {
            index,
            source: Box::new(self),
        }
    }

    /// Prefix an error with where it happened (image, variant, ...)
    /// without changing what kind of error it is.
    pub fn in_context(self, msg: impl Into<String>) -> Self {
        Error::Context {
            msg: msg.into(),
            source: Box::new(self),
        }
    }

    /// The innermost non-wrapper error, for classifying failures.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
