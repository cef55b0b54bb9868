use std::sync::Arc;

use elliptic_lab::coefficients::{CellPartition, CoefficientTensor};
use elliptic_lab::fem::{FeSolution, FeSpace};
use elliptic_lab::field::GradientArray;
use elliptic_lab::geometry::{PolygonalDomain, WhitneyGrid};
use elliptic_lab::norms::{operator_norm_probe, smooth_field, trial_rng, NormParams, WhitneyNorm};
use elliptic_lab::perturbation::{
    as_field, duality_experiment, gradient_map, perturb_solve, reduce_to_homogeneous_boundary, reduce_via_newton,
    verify_c2_bound, BoundaryData, SeriesOptions,
};
use elliptic_lab::solver::{
    newton_potential, residual, solve_dirichlet, structured_mesh_for, BoundaryKind, BvpSolver, NewtonPotential,
};
use num_complex::Complex64;
use proptest::prelude::*;

type C64 = Complex64;
const ONE: C64 = C64::new(1.0, 0.0);

struct Setup {
    solver: BvpSolver,
    wn: WhitneyNorm,
}

fn setup(h: f64, depth: u32, kind: BoundaryKind) -> Setup {
    let dom = PolygonalDomain::unit_square();
    let space = Arc::new(FeSpace::for_order(Arc::new(structured_mesh_for(&dom, h, 1).unwrap()), 1, 1).unwrap());
    let wn = WhitneyNorm::new(WhitneyGrid::build(&dom, depth).unwrap(), space.assembly_samples().clone()).unwrap();
    Setup { solver: BvpSolver::new(space, CoefficientTensor::laplacian(), kind).unwrap(), wn }
}

/// `[[0,1],[1,0]]` with checkerboard signs on a 4 x 4 partition; sup norm 1.
fn checkerboard() -> CoefficientTensor {
    let bb = PolygonalDomain::unit_square().bbox();
    let blocks = (0..16)
        .map(|c| {
            let s = if (c / 4 + c % 4) % 2 == 0 { 1.0 } else { -1.0 };
            vec![C64::from(0.0), C64::from(s), C64::from(s), C64::from(0.0)]
        })
        .collect();
    CoefficientTensor::piecewise(1, 1, CellPartition::new(bb, 4, 4), blocks).unwrap()
}

fn data(s: &Setup, k: u64) -> GradientArray {
    smooth_field(s.wn.samples(), 3, 2, &mut trial_rng(11, k))
}

fn opts(tol: f64, max_terms: usize) -> SeriesOptions {
    SeriesOptions { tol, max_terms, probe_trials: 8, ..SeriesOptions::default() }
}

#[test]
fn unperturbed_series_is_one_term() {
    let s = setup(0.125, 4, BoundaryKind::Dirichlet);
    let params = NormParams::new(2.0, 0.5).unwrap();
    let h = data(&s, 0);
    let (u, tr) = perturb_solve(&s.solver, s.solver.tensor(), &h, &s.wn, &params, &opts(1e-10, 200)).unwrap();
    assert_eq!(tr.terms_used, 1);
    assert!(tr.converged && tr.residual_b <= 1e-10);
    assert!(tr.c2_observed <= tr.c0_hat * 1.05);
    assert!(verify_c2_bound(&tr, 0.05).pass);
    let direct = s.solver.solve_array(&h).unwrap();
    assert_eq!(u.dofs, direct.dofs);
}

#[test]
fn decay_and_direct_solve_agreement() {
    let s = setup(0.0625, 5, BoundaryKind::Dirichlet);
    let params = NormParams::new(2.0, 0.5).unwrap();
    let eps = 0.05;
    let b = s.solver.tensor().perturbed(&checkerboard(), eps).unwrap();
    let h = data(&s, 1);
    let (u, tr) = perturb_solve(&s.solver, &b, &h, &s.wn, &params, &opts(1e-10, 200)).unwrap();
    assert!(tr.converged);
    assert!((tr.epsilon - eps).abs() < 1e-14);
    for r in &tr.ratios {
        assert!(*r <= tr.c0_hat * eps, "ratio {r} above {}", tr.c0_hat * eps);
    }
    // geometric envelope of the proof
    let h_norm = s.wn.value(&h, &params).unwrap();
    for (j, t) in tr.term_norms.iter().enumerate() {
        assert!(*t <= tr.c0_hat * (tr.c0_hat * eps).powi(j as i32) * h_norm * (1.0 + 1e-9));
    }
    let q = s.solver.space().assembly_samples();
    let direct = solve_dirichlet(&b, &as_field(&h), s.solver.space()).unwrap();
    let mismatch = u.gradient(q).combine(ONE, &direct.gradient(q), -ONE).unwrap().l2_norm() / direct.gradient(q).l2_norm();
    assert!(mismatch <= 1e-6, "{mismatch}");
    assert!(verify_c2_bound(&tr, 0.05).pass);
}

#[test]
fn sub_one_exponent_sums_pth_powers() {
    let s = setup(0.125, 4, BoundaryKind::Dirichlet);
    let params = NormParams::new(0.9, 0.5).unwrap();
    let b = s.solver.tensor().perturbed(&checkerboard(), 0.05).unwrap();
    let h = data(&s, 2);
    let (u, tr) = perturb_solve(&s.solver, &b, &h, &s.wn, &params, &opts(1e-10, 200)).unwrap();
    let total = s.wn.value(&u.gradient(s.solver.space().assembly_samples()), &params).unwrap();
    let sum: f64 = tr.term_norms.iter().map(|t| t.powf(0.9)).sum();
    assert!(total.powf(0.9) <= sum * (1.0 + 1e-12));
    assert!(verify_c2_bound(&tr, 0.05).pass);
}

#[test]
fn partial_sums_keep_zero_trace() {
    let s = setup(0.125, 4, BoundaryKind::Dirichlet);
    let params = NormParams::new(2.0, 0.5).unwrap();
    let b = s.solver.tensor().perturbed(&checkerboard(), 0.1).unwrap();
    let h = data(&s, 3);
    for k in 1..=5 {
        let (u, tr) = perturb_solve(&s.solver, &b, &h, &s.wn, &params, &opts(0.0, k)).unwrap();
        assert_eq!(tr.terms_used, k);
        for i in s.solver.space().boundary_dofs() {
            assert_eq!(u.dofs[i], C64::new(0.0, 0.0));
        }
    }
}

#[test]
fn probe_is_seed_stable() {
    let s = setup(0.125, 4, BoundaryKind::Dirichlet);
    let params = NormParams::new(2.0, 0.5).unwrap();
    let t = gradient_map(&s.solver);
    let extra = data(&s, 4);
    let c1 = operator_norm_probe(&t, &s.wn, &params, 2, 64, 1, std::slice::from_ref(&extra)).unwrap().c0_hat;
    let c2 = operator_norm_probe(&t, &s.wn, &params, 2, 64, 2, &[]).unwrap().c0_hat;
    assert!((c1 / c2 - 1.0).abs() < 0.1, "{c1} vs {c2}");
    let own = s.wn.value(&t(&extra).unwrap(), &params).unwrap() / s.wn.value(&extra, &params).unwrap();
    assert!(c1 >= own);
}

#[test]
fn homogeneous_boundary_reduction() {
    let s = setup(0.125, 4, BoundaryKind::Dirichlet);
    let space = s.solver.space();
    let q = space.assembly_samples();
    let f = FeSolution::new(space.clone(), (0..space.n_dofs()).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64).cos())).collect());
    let h = data(&s, 5);
    let (u, r) = reduce_to_homogeneous_boundary(&s.solver, &h, &f, None).unwrap();
    for i in space.boundary_dofs() {
        assert_eq!(u.dofs[i], f.dofs[i]);
    }
    assert!(r <= 1e-9);
    // data A grad F leaves nothing to correct
    let af = f.gradient(q).apply_tensor(s.solver.tensor()).unwrap();
    let (u, _) = reduce_to_homogeneous_boundary(&s.solver, &af, &f, None).unwrap();
    let err = u.dofs.iter().zip(&f.dofs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10);
}

#[test]
fn newton_reduction_against_direct_solve() {
    let dom = PolygonalDomain::unit_square();
    let s = setup(0.125, 4, BoundaryKind::Dirichlet);
    let space = s.solver.space();
    let a0 = CoefficientTensor::laplacian();
    let h = data(&s, 6);
    let hf = as_field(&h);
    let nr = newton_potential(&a0, &hf, &dom, space, 0.125, 3.0, true).unwrap();
    let trunc = nr.truncation.unwrap();
    let np = NewtonPotential::new(&a0, &dom, space, 0.125, 3.0).unwrap();
    let zero = FeSolution::zero(space.clone());
    let red = reduce_via_newton(&np, &s.solver, &hf, BoundaryData::Dirichlet(&zero), Some(trunc)).unwrap();
    let direct = solve_dirichlet(&a0, &hf, space).unwrap();
    let q = space.assembly_samples();
    let diff = red.u.gradient(q).combine(ONE, &direct.gradient(q), -ONE).unwrap().l2_norm() / direct.gradient(q).l2_norm();
    assert!(diff <= 2.0 * trunc, "{diff} vs truncation {trunc}");
    assert!(residual(&a0, &red.u, &hf, BoundaryKind::Dirichlet).unwrap() <= 1e-9);

    // boundary values taken from the potential itself need no correction
    let red = reduce_via_newton(&np, &s.solver, &hf, BoundaryData::Dirichlet(&red.newton.clone()), None).unwrap();
    assert!(red.correction.dofs.iter().all(|v| v.norm() < 1e-12));
    let err = red.u.dofs.iter().zip(&red.newton.dofs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-12);
}

#[test]
fn duality_self_adjoint_and_conjugate_pair() {
    let s = setup(0.125, 4, BoundaryKind::Dirichlet);
    let star = BvpSolver::new(s.solver.space().clone(), s.solver.tensor().adjoint(), BoundaryKind::Dirichlet).unwrap();
    let rep = duality_experiment(&s.solver, &star, &s.wn, &NormParams::new(2.0, 0.5).unwrap(), 32, 16, 1).unwrap();
    assert_eq!(rep.trials, 32);
    assert!(rep.max_pairing_error <= 1e-8);
    assert!((rep.ratio - 1.0).abs() <= 0.05, "{}", rep.ratio);
    let rep = duality_experiment(&s.solver, &star, &s.wn, &NormParams::new(4.0 / 3.0, 0.4).unwrap(), 8, 16, 1).unwrap();
    assert!(rep.ratio <= 1.1, "{}", rep.ratio);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn series_is_linear_in_data(alpha_re in -2.0f64..2.0, alpha_im in -2.0f64..2.0, k in 0u64..100) {
        let s = setup(0.125, 4, BoundaryKind::Dirichlet);
        let params = NormParams::new(2.0, 0.5).unwrap();
        let b = s.solver.tensor().perturbed(&checkerboard(), 0.08).unwrap();
        let alpha = C64::new(alpha_re, alpha_im);
        let (h1, h2) = (data(&s, 100 + k), data(&s, 200 + k));
        let o = opts(0.0, 12);
        let run = |h: &GradientArray| perturb_solve(&s.solver, &b, h, &s.wn, &params, &o).unwrap().0;
        let lhs = run(&h1.combine(alpha, &h2, ONE).unwrap());
        let rhs = run(&h1).combine(alpha, &run(&h2), ONE);
        let scale = rhs.dofs.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (x, y) in lhs.dofs.iter().zip(&rhs.dofs) {
            prop_assert!((x - y).norm() <= 1e-9 * scale.max(1.0));
        }
    }
}
