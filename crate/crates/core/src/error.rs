use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrbmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("profile wrap sum did not converge within {wraps} wraps")]
    Truncation { wraps: usize },
    #[error("near-singular propagator: min |1 - t a psi(p)| = {min_modulus:e}")]
    NearSingular { min_modulus: f64 },
    #[error("iteration failed to converge: {0}")]
    Convergence(String),
    #[error("vector not normalized: squared norm {0}")]
    NotNormalized(f64),
    #[error("need at least {need} eigenvalues, got {got}")]
    TooFewEigenvalues { got: usize, need: usize },
    #[error("quantity undefined in this regime: {0}")]
    UnsupportedRegime(String),
    #[error("eigendecomposition failed: {0}")]
    Decomposition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PrbmError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PrbmError::InvalidParameter(msg.into()))
}
