use thiserror::Error;

/// Errors raised across the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    InvalidMatrix,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (smallest eigenvalue {smallest:e}, tolerance {tol:e})")]
    NotPositiveDefinite { smallest: f64, tol: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("TLS solution is not unique: eigenvalues {lower:e} and {upper:e} are tied")]
    NonIdentifiable { lower: f64, upper: f64 },

    #[error("exact regressors are rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("need at least {needed} replicates, got {got}")]
    InsufficientReplicates { needed: usize, got: usize },

    #[error("quantile table has no Monte Carlo draws for the {0} statistic")]
    TableIncomplete(&'static str),

    #[error("no critical value available for level {0}")]
    UnsupportedLevel(f64),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("numerical issue: {0}")]
    NumericalIssue(String),

    #[error("{path}: row {row}: {msg}")]
    Parse { path: String, row: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
