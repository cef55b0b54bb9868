use thiserror::Error;

use crate::coefficients::EllipticityReport;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("coercivity check failed: lambda_hat = {:.3e}", .0.lambda_hat)]
    NotCoercive(EllipticityReport),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("incompatible Neumann data: kernel pairing {pairing:.3e} (relative {relative:.3e})")]
    IncompatibleData { pairing: f64, relative: f64 },

    #[error("perturbation refused: C0_hat = {c0_hat:.4}, epsilon = {epsilon:.4}, product {product:.4} >= 1")]
    PerturbationTooLarge { c0_hat: f64, epsilon: f64, product: f64 },

    #[error("perturbation series diverging: ratios {0:?}")]
    Diverging(Vec<f64>),

    #[error("ball B({center:?}, {radius}) is not contained in the domain")]
    BallNotContained { center: [f64; 2], radius: f64 },

    #[error("empty Whitney grid")]
    EmptyGrid,
}

pub type Result<T> = std::result::Result<T, LabError>;
