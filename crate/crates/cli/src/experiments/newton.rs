//! Newton potential: form inversion, adjoint pairing, norm ratio tables at
//! two paddings and the reduction of a domain problem through the potential.

use elliptic_lab::fem::FeSolution;
use elliptic_lab::field::{ArrayField, FnField, TensorField};
use elliptic_lab::geometry::{Point2, PolygonalDomain};
use elliptic_lab::norms::trial_rng;
use elliptic_lab::perturbation::{reduce_via_newton, BoundaryData};
use elliptic_lab::solver::{solve_dirichlet, BoundaryKind, BvpSolver, NewtonPotential};
use num_complex::Complex64;
use rand::Rng;

use super::{case_ps, fe_space, stream, trig_field, whitney_norm, ExpError, ExperimentOutput};
use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{Op, Table};
use crate::tensors::parse_tensor;

type C64 = Complex64;
const ONE: C64 = C64::new(1.0, 0.0);

fn masked<'a>(domain: &'a PolygonalDomain, h: &'a dyn ArrayField) -> impl ArrayField + 'a {
    FnField::new(h.width(), move |x: Point2, out: &mut [C64]| {
        if domain.contains(x) {
            h.eval(x, out)
        } else {
            out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0))
        }
    })
}

fn rel_l2(a: &elliptic_lab::field::GradientArray, b: &elliptic_lab::field::GradientArray) -> Result<f64, ExpError> {
    let d = a.combine(ONE, b, -ONE)?.l2_norm();
    let base = b.l2_norm();
    Ok(if base > 0.0 { d / base } else { d })
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExpError> {
    let spec = cfg.newton.as_ref().ok_or(ConfigError::MissingSection("newton"))?;
    let domain = cfg.domain()?;
    let a0 = parse_tensor(&spec.tensor, &domain, cfg.seed)?;
    let space = fe_space(&domain, spec.spacing, a0.m(), a0.n())?;
    let q = space.assembly_samples();
    let wn = whitney_norm(cfg, &domain, spec.whitney_depth, q)?;
    let width = space.width();
    let params = spec.points.iter().map(|&[p, s]| cfg.params(p, s)).collect::<Result<Vec<_>, _>>()?;
    let reference = spec
        .points
        .iter()
        .position(|&[p, s]| p == 2.0 && s == 0.5)
        .ok_or_else(|| ConfigError::Invalid("newton.points must contain (2, 0.5)".into()))?;
    let fields: Vec<_> = (0..spec.fields.max(2))
        .map(|i| trig_field(width, 3, &mut trial_rng(cfg.seed ^ stream::NEWTON, i as u64)))
        .collect();
    let sampled: Vec<_> = fields.iter().map(|f| f.sample(q)).collect();
    let mut h_norms = Vec::with_capacity(fields.len());
    for h in &sampled {
        h_norms.push(params.iter().map(|pp| wn.value(h, pp)).collect::<Result<Vec<_>, _>>()?);
    }
    let lambda = a0.pointwise_garding_bound(&[domain.bbox().center()]);
    let mut t = Table::new("newton", cfg);
    let mut first: Option<NewtonPotential> = None;
    let mut field0 = Vec::new();

    for &pad in &spec.paddings {
        let np = NewtonPotential::new(&a0, &domain, &space, spec.spacing, pad)?;
        let case = format!("padding={pad}");

        // form inversion on an interior bump
        let mut rng = trial_rng(cfg.seed ^ stream::NEWTON, 1000);
        let mut w = vec![C64::new(0.0, 0.0); space.n_dofs()];
        for i in space.interior_dofs() {
            w[i] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let w = FeSolution::new(space.clone(), w);
        let big = np.extend(&w);
        let grad = big.gradient_field();
        let data = TensorField { tensor: &a0, inner: &grad };
        let back = np.restrict(&np.apply(&data)?);
        let scale = w.dofs.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = back.dofs.iter().zip(&w.dofs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
        t.check(case.clone(), "inversion_error", err, "inversion_tol", Op::Le)?;

        // adjoint pairing
        let bq = np.box_space().assembly_samples();
        let (hf, gf) = (masked(&domain, &fields[0]), masked(&domain, &fields[1]));
        let u = np.apply(&hf)?;
        let v = np.apply_adjoint(&gf)?;
        let lhs = u.gradient(bq).pairing(&gf.sample(bq))?;
        let rhs = hf.sample(bq).pairing(&v.gradient(bq))?;
        let adj = (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
        t.check(case.clone(), "adjoint_pairing_error", adj, "adjoint_tol", Op::Le)?;

        // ratio table
        let mut table = vec![0.0f64; params.len()];
        for (i, f) in fields.iter().enumerate().take(spec.fields) {
            let u = if i == 0 { np.restrict(&u) } else { np.restrict(&np.apply(&masked(&domain, f))?) };
            let g = u.gradient(q);
            if i == 0 {
                field0.push(g.clone());
            }
            for (k, pp) in params.iter().enumerate() {
                let r = wn.value(&g, pp)? / h_norms[i][k];
                table[k] = table[k].max(r);
            }
        }
        for (k, &[p, s]) in spec.points.iter().enumerate() {
            t.record(format!("{case} {}", case_ps(p, s)), "max_ratio", table[k]);
        }
        let spread = table.iter().map(|c| c / table[reference]).fold(0.0, f64::max);
        t.check(case.clone(), "max_ratio_over_reference", spread, "uniform_factor", Op::Le)?;
        t.check(format!("{case} {}", case_ps(2.0, 0.5)), "ratio_times_lambda", table[reference] * lambda, "l2_bracket", Op::Le)?;
        if first.is_none() {
            first = Some(np);
        }
    }

    if let (Some(np), true) = (first, field0.len() >= 2) {
        let trunc = rel_l2(&field0[0], &field0[1])?;
        t.record(format!("padding={} vs {}", spec.paddings[0], spec.paddings[1]), "truncation_indicator", trunc);
        let omega = BvpSolver::new(space.clone(), a0.clone(), BoundaryKind::Dirichlet)?;
        let zero = FeSolution::zero(space.clone());
        let red = reduce_via_newton(&np, &omega, &fields[0], BoundaryData::Dirichlet(&zero), Some(trunc))?;
        let direct = solve_dirichlet(&a0, &fields[0], &space)?;
        let diff = rel_l2(&red.u.gradient(q), &direct.gradient(q))?;
        let case = format!("padding={} f=0", spec.paddings[0]);
        t.record(case.clone(), "reduction_residual", red.residual);
        t.record(case.clone(), "reduction_mismatch", diff);
        let rel = if trunc > 0.0 { diff / trunc } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        t.check(case, "mismatch_over_truncation", rel, "reduction_factor", Op::Le)?;
    }

    Ok(ExperimentOutput { rows: t.into_rows(), artifacts: Vec::new() })
}
