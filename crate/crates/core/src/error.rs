use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Kato norm likely infinite: quadrature not converging under refinement ({coarse:.4e} -> {fine:.4e})")]
    KatoDivergent { coarse: f64, fine: f64 },

    #[error("singular point: kernel evaluated at x = y")]
    SingularPoint,

    #[error("division by zero: (lambda, eps) = (0, 0) is not allowed here")]
    ZeroSpectralPoint,

    #[error("grid under-resolves the oscillation: spacing {spacing:.4e} exceeds required {required:.4e}")]
    Unresolved { spacing: f64, required: f64 },

    #[error("matrix is singular to working precision")]
    SingularMatrix,

    #[error("resonance obstruction: sigma_min = {sigma:.3e} at lambda = {lambda:.4e}")]
    Resonance { lambda: f64, sigma: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("CFL condition violated: dt = {dt:.4e} exceeds h/sqrt(3) = {limit:.4e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
