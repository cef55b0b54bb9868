//! Garding constants over tensor presets, the `A_rho` window and a clamped
//! plate convergence study.

use std::f64::consts::PI;

use elliptic_lab::coefficients::{CoefficientTensor, EllipticityReport};
use elliptic_lab::field::{ArrayField, FnField, TensorField};
use elliptic_lab::geometry::{Point2, PolygonalDomain};
use elliptic_lab::norms::fit_slope;
use elliptic_lab::solver::{estimate_garding_constant, garding_on_box, solve_dirichlet};
use num_complex::Complex64;

use super::{fe_space, ExpError, ExperimentOutput};
use crate::config::{ConfigError, ExperimentConfig, GardingSpec};
use crate::report::{Op, Table};
use crate::tensors::parse_tensor;

type C64 = Complex64;

fn lambda(a: &CoefficientTensor, domain: &PolygonalDomain, spec: &GardingSpec) -> Result<EllipticityReport, ExpError> {
    match spec.form.as_str() {
        "domain" => {
            let space = fe_space(domain, spec.spacing, a.m(), a.n())?;
            Ok(estimate_garding_constant(a, &space, true)?)
        }
        "whole_space" => Ok(garding_on_box(a, domain, spec.spacing, spec.box_factor)?),
        other => Err(ConfigError::Invalid(format!("garding form `{other}`")).into()),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExpError> {
    let spec = cfg.garding.as_ref().ok_or(ConfigError::MissingSection("garding"))?;
    let domain = cfg.domain()?;
    let mut t = Table::new("garding", cfg);

    for case in &spec.tensor {
        let a = parse_tensor(&case.name, &domain, cfg.seed)?;
        let rep = lambda(&a, &domain, spec)?;
        match case.expected {
            Some(e) => t.check_near(&case.name, "lambda_hat", rep.lambda_hat, "lambda_tol", Op::Near, Some(e))?,
            None => t.check(&case.name, "lambda_hat", rep.lambda_hat, "lambda_min", Op::Gt)?,
        };
    }

    if !spec.rho.is_empty() {
        let mut sweep = Vec::with_capacity(spec.rho.len());
        for &rho in &spec.rho {
            let a = CoefficientTensor::biharmonic_rho(rho, 2)?;
            let l = lambda(&a, &domain, spec)?.lambda_hat;
            let case = format!("rho={rho}");
            if rho == 0.0 {
                t.check_near(case, "lambda_hat", l, "rho_zero_tol", Op::Near, Some(1.0))?;
            } else {
                t.check(case, "lambda_hat", l, "rho_lambda_min", Op::Gt)?;
            }
            sweep.push((rho, l));
        }
        sweep.sort_by(|a, b| a.0.total_cmp(&b.0));
        let right: Vec<f64> = sweep.iter().filter(|(r, _)| *r >= 0.0).map(|(_, l)| *l).collect();
        let violations = right.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-9)).count();
        t.check("rho sweep", "monotone_violations", violations as f64, "monotone_violations", Op::Le)?;
    }

    for &rho in &spec.rho_endpoints {
        let a = CoefficientTensor::biharmonic_rho(rho, 2)?;
        let l = lambda(&a, &domain, spec)?.lambda_hat;
        let case = format!("rho={rho}");
        if rho > 0.0 {
            t.check(case, "lambda_hat", l, "endpoint_max", Op::Lt)?;
        } else {
            t.record(case, "lambda_hat", l);
        }
    }

    if !spec.bfs_spacings.is_empty() {
        let a = CoefficientTensor::biharmonic_rho(spec.bfs_rho, 2)?;
        let square = PolygonalDomain::unit_square();
        let exact = hessian_field();
        let data = TensorField { tensor: &a, inner: &exact };
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for &h in &spec.bfs_spacings {
            let space = fe_space(&square, h, 2, 1)?;
            let u = solve_dirichlet(&a, &data, &space)?;
            let q = space.assembly_samples();
            let err = u.gradient(q).combine(C64::new(1.0, 0.0), &exact.sample(q), C64::new(-1.0, 0.0))?.l2_norm();
            t.record(format!("bfs h={h}"), "hessian_l2_error", err);
            xs.push(h.ln());
            ys.push(err.ln());
        }
        let rate = if xs.len() >= 2 { fit_slope(&xs, &ys) } else { f64::NAN };
        t.check(format!("bfs rho={}", spec.bfs_rho), "convergence_rate", rate, "bfs_rate_min", Op::Ge)?;
    }

    Ok(ExperimentOutput { rows: t.into_rows(), artifacts: Vec::new() })
}

/// Weighted Hessian `[u_xx, sqrt2 u_xy, u_yy]` of `sin^2(pi x) sin^2(pi y)`.
fn hessian_field() -> impl ArrayField {
    FnField::new(3, |p: Point2, out: &mut [C64]| {
        let s = |t: f64| (PI * t).sin().powi(2);
        let d1 = |t: f64| PI * (2.0 * PI * t).sin();
        let d2 = |t: f64| 2.0 * PI * PI * (2.0 * PI * t).cos();
        out[0] = C64::new(d2(p.x) * s(p.y), 0.0);
        out[1] = C64::new(2f64.sqrt() * d1(p.x) * d1(p.y), 0.0);
        out[2] = C64::new(s(p.x) * d2(p.y), 0.0);
    })
}
