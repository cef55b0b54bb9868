//! Pairing identity between `L` and `L*` solutions and the comparison of the
//! two operator-norm probes.

use elliptic_lab::solver::{BoundaryKind, BvpSolver};

use super::{case_ps, fe_space, whitney_norm, ExpError, ExperimentOutput};
use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{Op, Table};
use crate::tensors::parse_tensor;

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExpError> {
    let spec = cfg.duality.as_ref().ok_or(ConfigError::MissingSection("duality"))?;
    let domain = cfg.domain()?;
    let mut t = Table::new("duality", cfg);
    for name in &spec.tensors {
        let a = parse_tensor(name, &domain, cfg.seed)?;
        let a_star = a.adjoint();
        let space = fe_space(&domain, spec.spacing, a.m(), a.n())?;
        let q = space.assembly_samples();
        let self_adjoint = q
            .points
            .iter()
            .step_by(97)
            .all(|&x| a.matrix_at(x).iter().zip(a_star.matrix_at(x)).all(|(u, v)| (u - v).norm() <= 1e-14));
        let wn = whitney_norm(cfg, &domain, spec.whitney_depth, q)?;
        let solver = BvpSolver::new(space.clone(), a, BoundaryKind::Dirichlet)?;
        let adjoint = BvpSolver::new(space.clone(), a_star, BoundaryKind::Dirichlet)?;
        for &[p, s] in &spec.points {
            let params = cfg.params(p, s)?;
            let rep = elliptic_lab::perturbation::duality_experiment(
                &solver,
                &adjoint,
                &wn,
                &params,
                spec.trials,
                spec.probe_trials,
                cfg.seed,
            )?;
            let case = format!("{name} {}", case_ps(p, s));
            t.check(case.clone(), "max_pairing_error", rep.max_pairing_error, "pairing_tol", Op::Le)?;
            t.record(case.clone(), "c0_hat", rep.c0_hat);
            t.record(case.clone(), "c0_star_hat", rep.c0_star_hat);
            t.check(case.clone(), "c0_star_over_c0", rep.ratio, "c1_bound", Op::Le)?;
            if self_adjoint {
                t.check_near(case, "c0_star_over_c0", rep.ratio, "self_adjoint_tol", Op::Near, Some(1.0))?;
            }
        }
    }
    Ok(ExperimentOutput { rows: t.into_rows(), artifacts: Vec::new() })
}
