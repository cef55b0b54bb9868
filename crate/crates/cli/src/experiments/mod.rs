//! Experiment runners. Each returns its rows in a fixed order plus any extra
//! files (traces, plots) to be written next to the CSV.

use std::sync::Arc;

use elliptic_lab::fem::FeSpace;
use elliptic_lab::field::{FnField, Samples};
use elliptic_lab::geometry::{Point2, PolygonalDomain, WhitneyGrid, WhitneyParams};
use elliptic_lab::norms::WhitneyNorm;
use elliptic_lab::solver::structured_mesh_for;
use elliptic_lab::LabError;
use num_complex::Complex64;
use rand::Rng;

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::ResultRow;

pub mod duality;
pub mod garding;
pub mod newton;
pub mod norms;
pub mod perturb;
pub mod poincare;

type C64 = Complex64;

#[derive(Debug, thiserror::Error)]
pub enum ExpError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lab(#[from] LabError),
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// `(relative path, contents)`.
    pub artifacts: Vec<(String, String)>,
}

/// Stream tags keep the random draws of different experiments apart.
pub(crate) mod stream {
    pub const PERTURB_DATA: u64 = 0x5101;
    pub const LATTICE_DATA: u64 = 0x5102;
    pub const NORM_PAIRS: u64 = 0x5202;
    pub const POINCARE: u64 = 0x5301;
    pub const BOUNDARY: u64 = 0x5302;
    pub const CACCIOPPOLI: u64 = 0x5303;
    pub const NEWTON: u64 = 0x5401;
}

pub(crate) fn fe_space(domain: &PolygonalDomain, spacing: f64, m: usize, n: usize) -> Result<Arc<FeSpace>, LabError> {
    let mesh = Arc::new(structured_mesh_for(domain, spacing, m)?);
    Ok(Arc::new(FeSpace::for_order(mesh, m, n)?))
}

pub(crate) fn whitney_norm(
    cfg: &ExperimentConfig,
    domain: &PolygonalDomain,
    depth: u32,
    samples: &Arc<Samples>,
) -> Result<WhitneyNorm, LabError> {
    let params = WhitneyParams { c1: cfg.whitney.c1, c2: cfg.whitney.c2 };
    WhitneyNorm::new(WhitneyGrid::build_with(domain, depth, params)?, samples.clone())
}

/// Continuous random trigonometric array field with decaying amplitudes.
pub(crate) fn trig_field(width: usize, modes: usize, rng: &mut impl Rng) -> FnField<impl Fn(Point2, &mut [C64]) + Send + Sync> {
    let tau = std::f64::consts::TAU;
    let mut terms = Vec::new();
    for k in 0..width {
        for kx in 0..=modes {
            for ky in 0..=modes {
                let amp = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
                let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp;
                let phase = rng.random::<f64>() * tau;
                terms.push((k, kx as f64 * std::f64::consts::PI, ky as f64 * std::f64::consts::PI, phase, c));
            }
        }
    }
    FnField::new(width, move |x: Point2, out: &mut [C64]| {
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for &(k, fx, fy, ph, c) in &terms {
            out[k] += c * (fx * x.x + fy * x.y + ph).cos();
        }
    })
}

pub(crate) fn case_ps(p: f64, s: f64) -> String {
    format!("p={p} s={s}")
}

/// `max(a/b, b/a)`, infinite when exactly one side vanishes.
pub(crate) fn spread(a: f64, b: f64) -> f64 {
    if a == b {
        return 1.0;
    }
    if a <= 0.0 || b <= 0.0 {
        return f64::INFINITY;
    }
    (a / b).max(b / a)
}
