use nhssa::NhssaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] NhssaError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed session file: {0}")]
    Session(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 2: bad input or infeasible setup, 3: the pencil could not be solved,
    /// 4: the service port is taken.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(
                NhssaError::SingularPencil(_)
                | NhssaError::DegenerateBasis(_)
                | NhssaError::SingularCovariance { .. }
                | NhssaError::NoConvergence,
            ) => 3,
            CliError::Bind { .. } => 4,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Session(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
