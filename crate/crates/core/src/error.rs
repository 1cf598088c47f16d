use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix dimension {0} is not even (expected 2m x 2m)")]
    OddDimension(usize),

    #[error("matrix is not symplectic: residual {residual:.3e} exceeds tol {tol:.3e}")]
    NotSymplectic { residual: f64, tol: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("singular matrix in {context}: condition estimate {cond:.3e}")]
    Singular { context: String, cond: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("ODE integration failed at t = {t:.6}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("trajectory left the chart domain at t = {t:.6} (|z| = {radius:.3})")]
    DomainExit { t: f64, radius: f64 },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("accuracy target missed: {0}")]
    Accuracy(String),

    #[error("cutoff too small: {0}")]
    Cutoff(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
