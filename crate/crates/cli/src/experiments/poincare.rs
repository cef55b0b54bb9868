//! Weighted Poincare ratios, boundary-mean normalization and the interior
//! Caccioppoli monitor, each at two resolutions.

use elliptic_lab::fem::FeSolution;
use elliptic_lab::field::{GradientArray, ZeroField};
use elliptic_lab::geometry::Point2;
use elliptic_lab::norms::trial_rng;
use elliptic_lab::perturbation::reduce_to_homogeneous_boundary;
use elliptic_lab::poincare::{boundary_mean_normalization, poincare_ratio, random_smooth_function};
use elliptic_lab::solver::{caccioppoli_ratio, BoundaryKind, BvpSolver};
use elliptic_lab::sum::ordered_map;
use num_complex::Complex64;
use rand::Rng;

use super::{fe_space, spread, stream, ExpError, ExperimentOutput};
use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{Op, Table};
use crate::tensors::parse_tensor;

type C64 = Complex64;

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExpError> {
    if cfg.poincare.is_none() && cfg.caccioppoli.is_none() {
        return Err(ConfigError::MissingSection("poincare").into());
    }
    let mut rows = Vec::new();
    if cfg.poincare.is_some() {
        rows.extend(poincare(cfg)?);
    }
    if cfg.caccioppoli.is_some() {
        rows.extend(caccioppoli(cfg)?);
    }
    Ok(ExperimentOutput { rows, artifacts: Vec::new() })
}

fn poincare(cfg: &ExperimentConfig) -> Result<Vec<crate::report::ResultRow>, ExpError> {
    let spec = cfg.poincare.as_ref().unwrap();
    let domain = cfg.domain()?;
    let mut t = Table::new("poincare", cfg);
    let mut maxima = Vec::new();
    for &h in &spec.spacings {
        let space = fe_space(&domain, h, 1, 1)?;
        let q = space.assembly_samples();
        let ratios = ordered_map(spec.fields, |i| {
            let w = random_smooth_function(&space, spec.modes, &mut trial_rng(cfg.seed ^ stream::POINCARE, i as u64));
            poincare_ratio(&w, &domain, q, spec.p, spec.s).map(|v| v.ratio)
        });
        let mut m: f64 = 0.0;
        for r in ratios {
            m = m.max(r?);
        }
        t.check(format!("h={h} fields={}", spec.fields), "max_ratio", m, "ratio_max", Op::Le)?;
        maxima.push(m);
    }
    if maxima.len() >= 2 {
        let worst = maxima.windows(2).map(|w| spread(w[0], w[1])).fold(1.0, f64::max);
        t.check(format!("p={} s={}", spec.p, spec.s), "refinement_spread", worst, "stability_factor", Op::Le)?;
    }

    // boundary arrays: the first is constant, the rest vary
    let coarse = fe_space(&domain, spec.spacings[0], 1, 1)?;
    for k in 0..spec.boundary_arrays {
        let mut rng = trial_rng(cfg.seed ^ stream::BOUNDARY, k as u64);
        let c = [C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)), C64::new(rng.random_range(-1.0..1.0), 0.0)];
        let (fx, fy, ph) = (rng.random_range(0.5..4.0), rng.random_range(0.5..4.0), rng.random::<f64>());
        let varying = k > 0;
        let f = move |x: Point2, out: &mut [C64]| {
            out.copy_from_slice(&c);
            if varying {
                out[0] += (fx * x.x + fy * x.y + ph).sin();
                out[1] += C64::new(0.0, (fy * x.x * x.y).cos());
            }
        };
        let bm = boundary_mean_normalization(coarse.mesh(), 4, 2, f)?;
        let case = format!("boundary array {k}");
        t.check(case.clone(), "normalized_mean", bm.residual, "mean_zero_tol", Op::Le)?;
        if !varying {
            let err = bm.mean.iter().zip(&c).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            t.check(case, "gradient_minus_constant", err, "mean_zero_tol", Op::Le)?;
        }
    }
    Ok(t.into_rows())
}

fn caccioppoli(cfg: &ExperimentConfig) -> Result<Vec<crate::report::ResultRow>, ExpError> {
    let spec = cfg.caccioppoli.as_ref().unwrap();
    let domain = cfg.domain()?;
    let a = parse_tensor(&spec.tensor, &domain, cfg.seed)?;
    let mut t = Table::new("caccioppoli", cfg);
    // ratio[spacing][field][center][exponent]
    let mut all = Vec::new();
    for &h in &spec.spacings {
        let space = fe_space(&domain, h, a.m(), a.n())?;
        let q = space.assembly_samples();
        let solver = BvpSolver::new(space.clone(), a.clone(), BoundaryKind::Dirichlet)?;
        let zero_h = GradientArray::zeros(q.clone(), space.width());
        let zero = ZeroField(space.width());
        let mut per_field = Vec::new();
        for i in 0..spec.fields {
            // discrete A-harmonic extension of random smooth boundary values
            let g = random_smooth_function(&space, 3, &mut trial_rng(cfg.seed ^ stream::CACCIOPPOLI, i as u64));
            let mut ext = vec![C64::new(0.0, 0.0); space.n_dofs()];
            for d in space.boundary_dofs() {
                ext[d] = g.dofs[d];
            }
            let (u, _) = reduce_to_homogeneous_boundary(&solver, &zero_h, &FeSolution::new(space.clone(), ext), None)?;
            let mut per_center = Vec::new();
            for &[cx, cy] in &spec.centers {
                let mut per_exp = Vec::new();
                for &p in &spec.exponents {
                    per_exp.push(caccioppoli_ratio(&a, &u, &zero, &domain, Point2::new(cx, cy), spec.radius, p, q)?);
                }
                per_center.push(per_exp);
            }
            per_field.push(per_center);
        }
        all.push(per_field);
    }
    for (ci, &[cx, cy]) in spec.centers.iter().enumerate() {
        for (ei, &p) in spec.exponents.iter().enumerate() {
            let case = format!("center=({cx},{cy}) r={} p={p}", spec.radius);
            let mut worst_ratio: f64 = 0.0;
            for (hi, &h) in spec.spacings.iter().enumerate() {
                let m = all[hi].iter().map(|f| f[ci][ei]).fold(0.0, f64::max);
                t.record(format!("{case} h={h}"), "max_ratio", m);
                worst_ratio = worst_ratio.max(m);
            }
            t.check(case.clone(), "max_ratio", worst_ratio, "ratio_max", Op::Le)?;
            let mut worst: f64 = 1.0;
            for hi in 1..spec.spacings.len() {
                for f in 0..spec.fields {
                    worst = worst.max(spread(all[hi - 1][f][ci][ei], all[hi][f][ci][ei]));
                }
            }
            t.check(case, "refinement_spread", worst, "stability_factor", Op::Le)?;
        }
    }
    Ok(t.into_rows())
}
