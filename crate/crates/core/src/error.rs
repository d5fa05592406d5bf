use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series has {found} distinct locations, at least {required} are needed")]
    TooFewPoints { found: usize, required: usize },

    #[error("penalized normal equations are singular at every candidate penalty")]
    SingularFit,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite eigenvalue encountered in the pooled operator")]
    NonFiniteEigenvalue,

    #[error("weighted projection is singular (condition number {condition:e})")]
    SingularProjection { condition: f64 },

    #[error("{stage} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not positive definite: {0}")]
    NonPositiveDefinite(String),

    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("path is empty")]
    EmptyPath,

    #[error("true edge set is degenerate (all or no edges), AUC undefined")]
    DegenerateTruth,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
