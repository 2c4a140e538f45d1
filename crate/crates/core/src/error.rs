use std::path::PathBuf;

/// Errors raised by the library and the experiment drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point {value} lies outside the {domain} domain")]
    Domain { value: f64, domain: &'static str },

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("oracle misuse: {0}")]
    Misuse(String),

    #[error("bound diverges: {0}")]
    Divergent(String),

    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
