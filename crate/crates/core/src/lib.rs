//! Numerical laboratory for higher-order elliptic boundary value problems in
//! divergence form on polygonal planar domains.

pub mod coefficients;
pub mod error;
pub mod fem;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod norms;
pub mod perturbation;
pub mod poincare;
pub mod solver;
pub mod sum;

pub use error::{LabError, Result};
