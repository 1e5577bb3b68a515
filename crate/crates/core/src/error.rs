use thiserror::Error;

#[derive(Debug, Error)]
pub enum NhssaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series of length {actual} is too short for d={d}, mbar={mbar}: need at least {required} samples")]
    SeriesTooShort {
        d: usize,
        mbar: usize,
        actual: usize,
        required: usize,
    },

    #[error("duplicate frequency {0} cycles/sample")]
    DuplicateFrequency(f64),

    #[error("signal specification has no terms")]
    EmptySpec,

    #[error("non-stationary noise model: {0}")]
    NonStationary(String),

    #[error("singular lag covariance (cond {cond:e}); use the SVD pencil path instead")]
    SingularCovariance { cond: f64 },

    #[error("rank-deficient normal equations for AR({order}) fit")]
    RankDeficient { order: usize },

    #[error("singular pencil: {0}")]
    SingularPencil(String),

    #[error("degenerate eigenbasis: {0}")]
    DegenerateBasis(String),

    #[error("eigen solver failed to converge")]
    NoConvergence,

    #[error("no feasible (d, mbar) cell in the grid")]
    InfeasibleGrid,

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for NhssaError {
    fn from(e: serde_json::Error) -> Self {
        NhssaError::Parse(e.to_string())
    }
}

impl From<csv::Error> for NhssaError {
    fn from(e: csv::Error) -> Self {
        NhssaError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NhssaError>;
