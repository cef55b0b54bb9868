//! Weighted Poincare ratios and the boundary-mean normalization of arrays.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::fem::{FeSolution, FeSpace};
use crate::field::Samples;
use crate::geometry::{boundary_quadrature, Mesh, Point2, PolygonalDomain};
use crate::sum::{ordered_map, pairwise_sum, pairwise_sum_complex};

type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareValue {
    pub c: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
}

/// Minimizer of the convex function `f` on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// `min_c int |w - c|^p` against `diam^{1+ps} int |grad w|^p dist^{p-1-ps}`
/// for the real part of the first component of `w`.
pub fn poincare_ratio(w: &FeSolution, domain: &PolygonalDomain, samples: &Arc<Samples>, p: f64, s: f64) -> Result<PoincareValue> {
    if !(p > 1.0 && p.is_finite()) || !(s > 0.0 && s < 1.0) {
        return Err(LabError::InvalidParameter(format!("need 1 < p < inf and 0 < s < 1, got p={p}, s={s}")));
    }
    let space = &w.space;
    let jets = ordered_map(samples.len(), |i| {
        let (xi, eta) = samples.refs[i];
        let j = space.eval_jets(&w.dofs, samples.cells[i], xi, eta)[0];
        (j[0].re, j[1].re.hypot(j[2].re))
    });
    let e = p - 1.0 - p * s;
    let grad_terms: Vec<f64> = jets
        .iter()
        .enumerate()
        .map(|(i, (_, g))| samples.weights[i] * g.powf(p) * domain.distance_to_boundary(samples.points[i]).powf(e))
        .collect();
    let rhs = domain.diameter().powf(1.0 + p * s) * pairwise_sum(&grad_terms);
    let lhs_at = |c: f64| {
        let t: Vec<f64> = jets.iter().enumerate().map(|(i, (v, _))| samples.weights[i] * (v - c).abs().powf(p)).collect();
        pairwise_sum(&t)
    };
    let lo = jets.iter().map(|j| j.0).fold(f64::INFINITY, f64::min);
    let hi = jets.iter().map(|j| j.0).fold(f64::NEG_INFINITY, f64::max);
    let c = if hi > lo { golden_section(lhs_at, lo, hi, 1e-12) } else { lo };
    let lhs = lhs_at(c);
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(PoincareValue { c, lhs, rhs, ratio })
}

/// FE interpolant of a random smooth trigonometric function.
pub fn random_smooth_function(space: &Arc<FeSpace>, modes: usize, rng: &mut impl Rng) -> FeSolution {
    let tau = std::f64::consts::TAU;
    let mut terms = Vec::new();
    for kx in 0..=modes {
        for ky in 0..=modes {
            let a: f64 = rng.random_range(-1.0..1.0) / (1.0 + (kx * kx + ky * ky) as f64);
            terms.push((kx as f64 * 0.5 * tau, ky as f64 * 0.5 * tau, rng.random::<f64>() * tau, rng.random::<f64>() * tau, a));
        }
    }
    let dofs = space.interpolate_scalar(|x: Point2| {
        let mut out = [0.0; 4];
        for &(fx, fy, px, py, a) in &terms {
            let (cx, sx) = ((fx * x.x + px).cos(), (fx * x.x + px).sin());
            let (cy, sy) = ((fy * x.y + py).cos(), (fy * x.y + py).sin());
            out[0] += a * cx * cy;
            out[1] -= a * fx * sx * cy;
            out[2] -= a * fy * cx * sy;
            out[3] += a * fx * fy * sx * sy;
        }
        out
    });
    FeSolution::new(space.clone(), dofs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMean {
    /// Boundary average of the array, the gradient of the linear normalizer.
    pub mean: Vec<C64>,
    /// `|int (f - mean) dsigma|` after normalization.
    pub residual: f64,
}

/// Subtracts the boundary average from an array-valued boundary function.
pub fn boundary_mean_normalization(mesh: &Mesh, order: usize, width: usize, f: impl Fn(Point2, &mut [C64])) -> Result<BoundaryMean> {
    let bq = boundary_quadrature(mesh, order)?;
    let total = bq.total_weight();
    let vals: Vec<Vec<C64>> = bq
        .points
        .iter()
        .map(|bp| {
            let mut v = vec![C64::new(0.0, 0.0); width];
            f(bp.point, &mut v);
            v
        })
        .collect();
    let integral = |k: usize, shift: C64| {
        let t: Vec<C64> = bq.points.iter().zip(&vals).map(|(bp, v)| (v[k] - shift) * bp.weight).collect();
        pairwise_sum_complex(&t)
    };
    let mean: Vec<C64> = (0..width).map(|k| integral(k, C64::new(0.0, 0.0)) / total).collect();
    let residual = (0..width).map(|k| integral(k, mean[k]).norm()).fold(0.0, f64::max);
    Ok(BoundaryMean { mean, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::trial_rng;

    fn space() -> Arc<FeSpace> {
        let mesh = Arc::new(Mesh::rect_grid_triangles(&PolygonalDomain::unit_square(), 0.125).unwrap());
        Arc::new(FeSpace::for_order(mesh, 1, 1).unwrap())
    }

    #[test]
    fn golden_section_finds_minimum() {
        let c = golden_section(|c| (c - 0.3).powi(2), -1.0, 2.0, 1e-12);
        assert!((c - 0.3).abs() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_lhs() {
        let sp = space();
        let w = FeSolution::new(sp.clone(), vec![C64::new(2.5, 0.0); sp.n_dofs()]);
        let v = poincare_ratio(&w, &PolygonalDomain::unit_square(), sp.assembly_samples(), 2.0, 0.5).unwrap();
        assert_eq!(v.lhs, 0.0);
        assert_eq!(v.ratio, 0.0);
    }

    #[test]
    fn random_function_ratio_is_finite() {
        let sp = space();
        let w = random_smooth_function(&sp, 3, &mut trial_rng(1, 0));
        let v = poincare_ratio(&w, &PolygonalDomain::unit_square(), sp.assembly_samples(), 2.0, 0.5).unwrap();
        assert!(v.ratio.is_finite() && v.ratio > 0.0);
    }

    #[test]
    fn constant_boundary_array_normalizes_to_zero() {
        let sp = space();
        let m = boundary_mean_normalization(sp.mesh(), 4, 2, |_, o| {
            o[0] = C64::new(1.0, -2.0);
            o[1] = C64::new(0.5, 0.0);
        })
        .unwrap();
        assert!((m.mean[0] - C64::new(1.0, -2.0)).norm() < 1e-14);
        assert!(m.residual < 1e-12);
    }
}
