use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(usize),
    #[error("Fock level {n} does not fit in a truncation of dimension {dim}")]
    Truncation { n: usize, dim: usize },
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("degenerate temporal mode: {0}")]
    DegenerateMode(String),
    #[error("time grids do not match")]
    GridMismatch,
    #[error("shift of {tau:e} moves the mode entirely off the grid")]
    EmptyMode { tau: f64 },
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),
    #[error("marginal accuracy: clamped negative mass {0:e} exceeds 1e-6")]
    Accuracy(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("no signal above the background: dominant eigenvalue {eigenvalue:e}, noise edge {threshold:e}")]
    NoSignal { eigenvalue: f64, threshold: f64 },
    #[error("degenerate likelihood: record {index} has probability {probability:e}; use a larger dimension or trim outliers")]
    DegenerateLikelihood { index: usize, probability: f64 },
    #[error("need at least {needed} traces, got {got}")]
    InsufficientTraces { needed: usize, got: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
