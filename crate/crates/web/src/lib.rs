//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each operation has a plain Rust entry point (used by the native tests)
//! and a thin `#[wasm_bindgen]` wrapper returning flat numeric arrays.

use std::sync::Arc;

use elliptic_lab::coefficients::{CellPartition, CoefficientTensor};
use elliptic_lab::fem::FeSpace;
use elliptic_lab::geometry::{PolygonalDomain, WhitneyGrid};
use elliptic_lab::norms::{smooth_field, trial_rng, NormParams, WhitneyNorm};
use elliptic_lab::perturbation::{perturb_solve, SeriesOptions};
use elliptic_lab::solver::{estimate_garding_constant, structured_mesh_for, BoundaryKind, BvpSolver};
use elliptic_lab::LabError;
use num_complex::Complex64;
use wasm_bindgen::prelude::*;

type C64 = Complex64;

pub fn domain(name: &str) -> Result<PolygonalDomain, LabError> {
    match name {
        "unit_square" | "square" => Ok(PolygonalDomain::unit_square()),
        "l_shape" => Ok(PolygonalDomain::l_shape()),
        other => Err(LabError::InvalidParameter(format!("unknown domain `{other}`"))),
    }
}

fn js(e: LabError) -> JsError {
    JsError::new(&e.to_string())
}

/// Cubes as `[x, y, side, ...]` plus the uncovered area fraction.
#[wasm_bindgen]
pub struct GridView {
    cubes: Vec<f64>,
    tail: f64,
    polygon: Vec<f64>,
}

#[wasm_bindgen]
impl GridView {
    #[wasm_bindgen(getter)]
    pub fn cubes(&self) -> Vec<f64> {
        self.cubes.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn tail(&self) -> f64 {
        self.tail
    }
    /// Polygon vertices as `[x, y, ...]`.
    #[wasm_bindgen(getter)]
    pub fn polygon(&self) -> Vec<f64> {
        self.polygon.clone()
    }
}

pub fn grid_view(name: &str, depth: u32) -> Result<GridView, LabError> {
    let dom = domain(name)?;
    let g = WhitneyGrid::build(&dom, depth)?;
    let cubes = g.cubes().iter().flat_map(|c| [c.corner.x, c.corner.y, c.side]).collect();
    let polygon = dom.vertices().iter().flat_map(|v| [v.x, v.y]).collect();
    Ok(GridView { cubes, tail: g.tail_fraction(), polygon })
}

#[wasm_bindgen]
pub fn whitney_grid(domain: &str, depth: u32) -> Result<GridView, JsError> {
    grid_view(domain, depth).map_err(js)
}

/// Garding constant of the biharmonic family at each `rho`.
pub fn garding_values(rhos: &[f64], spacing: f64) -> Result<Vec<f64>, LabError> {
    let mesh = Arc::new(structured_mesh_for(&PolygonalDomain::unit_square(), spacing, 2)?);
    let space = FeSpace::for_order(mesh, 2, 1)?;
    rhos.iter()
        .map(|&rho| Ok(estimate_garding_constant(&CoefficientTensor::biharmonic_rho(rho, 2)?, &space, true)?.lambda_hat))
        .collect()
}

#[wasm_bindgen]
pub fn garding_curve(rhos: Vec<f64>, spacing: f64) -> Result<Vec<f64>, JsError> {
    garding_values(&rhos, spacing).map_err(js)
}

/// Term norms and ratios of the perturbation series for one run.
#[wasm_bindgen]
pub struct DecayView {
    term_norms: Vec<f64>,
    ratios: Vec<f64>,
    c0_hat: f64,
    c2_observed: f64,
    c2_predicted: f64,
    converged: bool,
}

#[wasm_bindgen]
impl DecayView {
    #[wasm_bindgen(getter)]
    pub fn term_norms(&self) -> Vec<f64> {
        self.term_norms.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn ratios(&self) -> Vec<f64> {
        self.ratios.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn c0_hat(&self) -> f64 {
        self.c0_hat
    }
    #[wasm_bindgen(getter)]
    pub fn c2_observed(&self) -> f64 {
        self.c2_observed
    }
    /// `NaN` when the bound does not apply.
    #[wasm_bindgen(getter)]
    pub fn c2_predicted(&self) -> f64 {
        self.c2_predicted
    }
    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }
}

/// `[[0,1],[1,0]]` with checkerboard signs on a 4 x 4 partition.
fn checkerboard(dom: &PolygonalDomain) -> CoefficientTensor {
    let blocks = (0..16)
        .map(|c| {
            let s = if (c % 4 + c / 4) % 2 == 0 { 1.0 } else { -1.0 };
            vec![C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.0, 0.0)]
        })
        .collect();
    CoefficientTensor::piecewise(1, 1, CellPartition::new(dom.bbox(), 4, 4), blocks).expect("2x2 blocks")
}

/// Laplacian plus `eps` times a checkerboard perturbation, Dirichlet on the unit square.
pub fn decay(eps: f64, p: f64, s: f64, spacing: f64, seed: u64) -> Result<DecayView, LabError> {
    let dom = PolygonalDomain::unit_square();
    let mesh = Arc::new(structured_mesh_for(&dom, spacing, 1)?);
    let space = Arc::new(FeSpace::for_order(mesh, 1, 1)?);
    let depth = ((1.0 / spacing).log2().round() as u32).clamp(3, 6);
    let wn = WhitneyNorm::new(WhitneyGrid::build(&dom, depth)?, space.assembly_samples().clone())?;
    let a = CoefficientTensor::laplacian();
    let b = a.perturbed(&checkerboard(&dom), eps)?;
    let solver = BvpSolver::new(space, a, BoundaryKind::Dirichlet)?;
    let h = smooth_field(wn.samples(), 3, 2, &mut trial_rng(seed, 0));
    let opts = SeriesOptions { tol: 1e-10, max_terms: 60, probe_trials: 8, seed, ..SeriesOptions::default() };
    let (_, tr) = perturb_solve(&solver, &b, &h, &wn, &NormParams::new(p, s)?, &opts)?;
    Ok(DecayView {
        term_norms: tr.term_norms,
        ratios: tr.ratios,
        c0_hat: tr.c0_hat,
        c2_observed: tr.c2_observed,
        c2_predicted: tr.c2_predicted.unwrap_or(f64::NAN),
        converged: tr.converged,
    })
}

#[wasm_bindgen]
pub fn perturbation_decay(eps: f64, p: f64, s: f64, spacing: f64, seed: u64) -> Result<DecayView, JsError> {
    decay(eps, p, s, spacing, seed).map_err(js)
}
