//! Perturbation series sweeps over `(p, s)` and `epsilon`, and the Neumann
//! lattice around `(1/2, 1/2)` in the `(s, 1/p)` plane.

use elliptic_lab::coefficients::CoefficientTensor;
use elliptic_lab::fem::FeSpace;
use elliptic_lab::norms::{smooth_field, trial_rng, WhitneyNorm};
use elliptic_lab::perturbation::{perturb_solve, PerturbationTrace, SeriesOptions};
use elliptic_lab::solver::{BoundaryKind, BvpSolver};
use elliptic_lab::sum::ordered_map;
use elliptic_lab::LabError;
use num_complex::Complex64;

use super::{case_ps, fe_space, stream, whitney_norm, ExpError, ExperimentOutput};
use crate::config::{ConfigError, ExperimentConfig, LatticeSpec, PerturbSpec};
use crate::report::{heat_map_svg, HeatCell, Op, Table};
use crate::tensors::parse_tensor;

type C64 = Complex64;

/// Outcome of one series run.
enum Outcome {
    Done(Box<PerturbationTrace>, f64),
    Refused(f64),
    Diverged(Vec<f64>),
}

fn run_series(
    a: &BvpSolver,
    b: &CoefficientTensor,
    h: &elliptic_lab::field::GradientArray,
    wn: &WhitneyNorm,
    params: &elliptic_lab::norms::NormParams,
    opts: &SeriesOptions,
    compare_direct: bool,
) -> Result<Outcome, LabError> {
    match perturb_solve(a, b, h, wn, params, opts) {
        Ok((u, trace)) => {
            let mismatch = if compare_direct {
                let direct = BvpSolver::new(a.space().clone(), b.clone(), a.kind())?.solve_array(h)?;
                let q = a.space().assembly_samples();
                let gd = direct.gradient(q);
                let diff = u.gradient(q).combine(C64::new(1.0, 0.0), &gd, C64::new(-1.0, 0.0))?;
                let base = gd.l2_norm();
                if base > 0.0 { diff.l2_norm() / base } else { diff.l2_norm() }
            } else {
                f64::NAN
            };
            Ok(Outcome::Done(Box::new(trace), mismatch))
        }
        Err(LabError::PerturbationTooLarge { product, .. }) => Ok(Outcome::Refused(product)),
        Err(LabError::Diverging(r)) => Ok(Outcome::Diverged(r)),
        Err(e) => Err(e),
    }
}

fn file_tag(v: f64) -> String {
    format!("{v}").replace('-', "m")
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExpError> {
    let spec = cfg.perturb.as_ref().ok_or(ConfigError::MissingSection("perturb"))?;
    let mut out = ExperimentOutput::default();
    let mut t = Table::new("perturb", cfg);
    sweep(cfg, spec, &mut t, &mut out)?;
    if let Some(l) = &spec.lattice {
        t.set_experiment("perturb_lattice", "perturb_lattice");
        lattice(cfg, l, &mut t, &mut out)?;
    }
    out.rows = t.into_rows();
    Ok(out)
}

fn sweep(cfg: &ExperimentConfig, spec: &PerturbSpec, t: &mut Table<'_>, out: &mut ExperimentOutput) -> Result<(), ExpError> {
    let domain = cfg.domain()?;
    let a_t = parse_tensor(&spec.reference, &domain, cfg.seed)?;
    let r_t = parse_tensor(&spec.perturbation, &domain, cfg.seed)?;
    let space = fe_space(&domain, spec.spacing, a_t.m(), a_t.n())?;
    let q = space.assembly_samples();
    let wn = whitney_norm(cfg, &domain, spec.whitney_depth, q)?;
    let a = BvpSolver::new(space.clone(), a_t.clone(), BoundaryKind::Dirichlet)?;
    let h = smooth_field(q, 3, space.width(), &mut trial_rng(cfg.seed ^ stream::PERTURB_DATA, 0));
    let opts = SeriesOptions {
        tol: spec.tol,
        max_terms: spec.max_terms,
        probe_trials: spec.probe_trials,
        seed: cfg.seed,
        ..SeriesOptions::default()
    };
    for &[p, s] in &spec.points {
        let params = cfg.params(p, s)?;
        for &eps in &spec.epsilons {
            let b = a_t.perturbed(&r_t, eps)?;
            let case = format!("{} eps={eps}", case_ps(p, s));
            match run_series(&a, &b, &h, &wn, &params, &opts, true)? {
                Outcome::Done(tr, mismatch) => {
                    t.record(case.clone(), "c0_hat", tr.c0_hat);
                    t.record(case.clone(), "terms_used", tr.terms_used as f64);
                    t.check(case.clone(), "converged", f64::from(u8::from(tr.converged)), "converged", Op::Ge)?;
                    let bound = tr.c0_hat * tr.epsilon;
                    let rel = if tr.ratios.is_empty() || bound == 0.0 { 0.0 } else { tr.max_ratio() / bound };
                    t.check(case.clone(), "max_ratio_over_c0_eps", rel, "ratio_slack", Op::Le)?;
                    match tr.c2_predicted {
                        Some(c2) => t.check(case.clone(), "c2_observed_over_predicted", tr.c2_observed / c2, "c2_slack", Op::Le)?,
                        None => {
                            t.record(case.clone(), "c2_observed", tr.c2_observed);
                            true
                        }
                    };
                    t.check(case.clone(), "direct_solve_mismatch", mismatch, "direct_match", Op::Le)?;
                    let stem = format!("traces/perturb_p{}_s{}_eps{}", file_tag(p), file_tag(s), file_tag(eps));
                    out.artifacts.push((format!("{stem}.csv"), tr.to_csv()));
                    out.artifacts.push((format!("{stem}.json"), tr.to_json() + "\n"));
                }
                Outcome::Refused(product) => t.record(case, "refused_guard_product", product),
                Outcome::Diverged(r) => {
                    t.check(case.clone(), "converged", 0.0, "converged", Op::Ge)?;
                    t.record(case, "last_ratio", r.last().copied().unwrap_or(f64::NAN));
                }
            }
        }
    }
    Ok(())
}

fn lattice(cfg: &ExperimentConfig, l: &LatticeSpec, t: &mut Table<'_>, out: &mut ExperimentOutput) -> Result<(), ExpError> {
    let kind = match l.problem.as_str() {
        "dirichlet" => BoundaryKind::Dirichlet,
        "neumann" => BoundaryKind::Neumann,
        other => return Err(ConfigError::Invalid(format!("lattice problem `{other}`")).into()),
    };
    let domain = cfg.domain()?;
    let a_t = parse_tensor(&l.reference, &domain, cfg.seed)?;
    let r_t = parse_tensor(&l.perturbation, &domain, cfg.seed)?;
    let space: std::sync::Arc<FeSpace> = fe_space(&domain, l.spacing, a_t.m(), a_t.n())?;
    let q = space.assembly_samples();
    let wn = whitney_norm(cfg, &domain, l.whitney_depth, q)?;
    let a = BvpSolver::new(space.clone(), a_t.clone(), kind)?;
    t.check(&l.reference, "lambda_hat", a.report().lambda_hat, "lambda_min", Op::Gt)?;
    let b = a_t.perturbed(&r_t, l.epsilon)?;
    let h = smooth_field(q, 3, space.width(), &mut trial_rng(cfg.seed ^ stream::LATTICE_DATA, 0));
    let opts = SeriesOptions { probe_trials: l.probe_trials, seed: cfg.seed, ..SeriesOptions::default() };
    let points = l.points();
    let params = points.iter().map(|&(s, ip)| cfg.params(1.0 / ip, s)).collect::<Result<Vec<_>, _>>()?;
    let results = ordered_map(points.len(), |i| run_series(&a, &b, &h, &wn, &params[i], &opts, false));
    let mut cells = Vec::with_capacity(points.len());
    for (&(s, ip), res) in points.iter().zip(results) {
        let case = format!("s={s:.4} 1/p={ip:.4}");
        let (converged, level) = match res? {
            Outcome::Done(tr, _) => {
                t.record(case.clone(), "c0_hat", tr.c0_hat);
                t.record(case.clone(), "max_ratio", tr.max_ratio());
                (tr.converged, Some(tr.max_ratio()))
            }
            Outcome::Refused(product) => {
                t.record(case.clone(), "refused_guard_product", product);
                (false, None)
            }
            Outcome::Diverged(_) => (false, None),
        };
        t.check(case, "converged", f64::from(u8::from(converged)), "converged", Op::Ge)?;
        cells.push(HeatCell { s, inv_p: ip, level: if converged { level } else { None } });
    }
    let title = format!("{} {}, eps = {}", l.problem, l.reference, l.epsilon);
    out.artifacts.push((
        "perturb_lattice.svg".into(),
        heat_map_svg(&title, &cells, "colour: largest successive ratio (blue 0, red 1); black: not converged"),
    ));
    Ok(())
}
