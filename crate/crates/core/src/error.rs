use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate ensemble: d = {d} must exceed s = {s}")]
    DegenerateEnsemble { d: usize, s: usize },

    #[error("configuration violates {} constraint(s): {}", .0.len(), .0.join("; "))]
    ConfigInvalid(Vec<String>),

    #[error("Gram matrix is singular (failed pivot {pivot} after jitter retry)")]
    SingularGram { pivot: usize },

    #[error("rank deficient: {count} points exceed {dim} features")]
    RankDeficient { count: usize, dim: usize },

    #[error("interpolation residual {residual:.3e} exceeds tolerance")]
    InterpolationResidual { residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty model list")]
    EmptyModelList,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("survival^2 = {su_sq:.6e} exceeds total variance {total_var:.6e}")]
    NumericalInconsistency { su_sq: f64, total_var: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("empty grid: {0}")]
    EmptyGrid(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("quadrature did not converge (estimate {estimate:.6e}, error {error:.3e})")]
    QuadratureNonconvergence { estimate: f64, error: f64 },

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
