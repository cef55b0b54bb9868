use std::sync::Arc;

use elliptic_lab::coefficients::CoefficientTensor;
use elliptic_lab::fem::{FeSolution, FeSpace};
use elliptic_lab::field::{ArrayField, FnField, ZeroField};
use elliptic_lab::geometry::{Point2, PolygonalDomain};
use elliptic_lab::solver::{
    assemble_boundary_functional, assemble_load, assemble_stiffness, caccioppoli_ratio, extract_neumann_data,
    residual, solve_dirichlet, solve_neumann, structured_mesh_for, BoundaryKind, BvpSolver, NewtonPotential,
};
use num_complex::Complex64;
use proptest::prelude::*;

type C64 = Complex64;
const ONE: C64 = C64::new(1.0, 0.0);

fn space(domain: &PolygonalDomain, h: f64, m: usize) -> Arc<FeSpace> {
    let mesh = Arc::new(structured_mesh_for(domain, h, m).unwrap());
    Arc::new(FeSpace::for_order(mesh, m, 1).unwrap())
}

fn vertex(sp: &FeSpace, x: f64, y: f64) -> usize {
    sp.mesh().find_vertex(Point2::new(x, y), 1e-12).unwrap()
}

fn constant_field(h: [C64; 2]) -> impl ArrayField {
    FnField::new(2, move |_: Point2, o: &mut [C64]| o.copy_from_slice(&h))
}

fn trig(seed: f64) -> impl ArrayField {
    FnField::new(2, move |p: Point2, o: &mut [C64]| {
        o[0] = C64::new((seed * p.x + 2.0 * p.y).sin(), (p.x * p.y + seed).cos());
        o[1] = C64::new((3.0 * p.y - seed * p.x).cos(), p.x - 0.5);
    })
}

fn rel_grad_error(u: &FeSolution, exact: impl Fn(Point2) -> [f64; 2] + Send + Sync) -> f64 {
    let q = u.space.assembly_samples();
    let ex = FnField::new(2, move |p: Point2, o: &mut [C64]| {
        let g = exact(p);
        o[0] = C64::from(g[0]);
        o[1] = C64::from(g[1]);
    })
    .sample(q);
    u.gradient(q).combine(ONE, &ex, -ONE).unwrap().l2_norm() / ex.l2_norm()
}

fn rate(errors: &[f64]) -> f64 {
    (errors[0] / errors[errors.len() - 1]).log2() / (errors.len() - 1) as f64
}

#[test]
fn two_triangle_laplacian_stiffness() {
    let sp = space(&PolygonalDomain::unit_square(), 1.0, 1);
    assert_eq!(sp.mesh().n_cells(), 2);
    let s = assemble_stiffness(&sp, &CoefficientTensor::laplacian()).unwrap();
    let v = [vertex(&sp, 0.0, 0.0), vertex(&sp, 1.0, 0.0), vertex(&sp, 1.0, 1.0), vertex(&sp, 0.0, 1.0)];
    // diagonal from (0,0) to (1,1); right angles at (1,0) and (0,1)
    let expected = [
        [1.0, -0.5, 0.0, -0.5],
        [-0.5, 1.0, -0.5, 0.0],
        [0.0, -0.5, 1.0, -0.5],
        [-0.5, 0.0, -0.5, 1.0],
    ];
    for i in 0..4 {
        for j in 0..4 {
            assert!((s.get(v[i], v[j]) - C64::from(expected[i][j])).norm() < 1e-14, "({i},{j})");
        }
    }
}

#[test]
fn stiffness_is_linear_and_affine_in_rho() {
    let sp = space(&PolygonalDomain::unit_square(), 1.0, 2);
    assert_eq!(sp.mesh().n_cells(), 1);
    let s0 = assemble_stiffness(&sp, &CoefficientTensor::biharmonic_rho(0.0, 2).unwrap()).unwrap().to_dense();
    let s1 = assemble_stiffness(&sp, &CoefficientTensor::biharmonic_rho(1.0, 2).unwrap()).unwrap().to_dense();
    let scale = s0.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for rho in [-0.7, 0.3, 0.9] {
        let sr = assemble_stiffness(&sp, &CoefficientTensor::biharmonic_rho(rho, 2).unwrap()).unwrap().to_dense();
        for k in 0..sr.len() {
            let want = s1[k] * rho + s0[k] * (1.0 - rho);
            assert!((sr[k] - want).norm() <= 1e-13 * scale);
        }
    }
    let sp1 = space(&PolygonalDomain::l_shape(), 0.25, 1);
    let a = CoefficientTensor::laplacian();
    let s = assemble_stiffness(&sp1, &a).unwrap().to_dense();
    let s3 = assemble_stiffness(&sp1, &a.scaled(3.0)).unwrap().to_dense();
    assert!(s.iter().zip(&s3).all(|(x, y)| (x * 3.0 - y).norm() < 1e-13));
}

#[test]
fn constant_load_matches_divergence_theorem() {
    let sp = space(&PolygonalDomain::unit_square(), 1.0, 1);
    let h = [C64::new(0.7, 0.2), C64::new(-1.3, 0.5)];
    let b = assemble_load(&sp, &constant_field(h).sample(sp.assembly_samples())).unwrap();
    // b_i = int_bdry phi_i H.nu; each corner sees two half edges
    let want = [
        ((0.0, 0.0), -(h[0] + h[1]) * 0.5),
        ((1.0, 0.0), (h[0] - h[1]) * 0.5),
        ((1.0, 1.0), (h[0] + h[1]) * 0.5),
        ((0.0, 1.0), (h[1] - h[0]) * 0.5),
    ];
    for ((x, y), w) in want {
        assert!((b[vertex(&sp, x, y)] - w).norm() < 1e-14);
    }
    let zero = assemble_load(&sp, &ZeroField(2).sample(sp.assembly_samples())).unwrap();
    assert!(zero.iter().all(|v| *v == C64::new(0.0, 0.0)));
}

#[test]
fn dirichlet_manufactured_rate() {
    use std::f64::consts::PI;
    let sq = PolygonalDomain::unit_square();
    let a = CoefficientTensor::laplacian();
    let exact = |p: Point2| [PI * (PI * p.x).cos() * (PI * p.y).sin(), PI * (PI * p.x).sin() * (PI * p.y).cos()];
    let data = FnField::new(2, move |p: Point2, o: &mut [C64]| {
        let g = exact(p);
        o[0] = C64::from(g[0]);
        o[1] = C64::from(g[1]);
    });
    let errors: Vec<f64> = [0.125, 0.0625, 0.03125]
        .iter()
        .map(|&h| rel_grad_error(&solve_dirichlet(&a, &data, &space(&sq, h, 1)).unwrap(), exact))
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]));
    let r = rate(&errors);
    assert!((0.9..1.3).contains(&r), "rate {r} from {errors:?}");

    let u = solve_dirichlet(&a, &ZeroField(2), &space(&sq, 0.25, 1)).unwrap();
    assert!(u.dofs.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn neumann_manufactured_harmonic_rate() {
    let sq = PolygonalDomain::unit_square();
    let a = CoefficientTensor::laplacian();
    // u* = x^2 - y^2
    let exact = |p: Point2| [2.0 * p.x, -2.0 * p.y];
    let mut errors = Vec::new();
    for h in [0.125, 0.0625, 0.03125] {
        let sp = space(&sq, h, 1);
        let g = assemble_boundary_functional(&sp, 4, |bp, out| {
            let d = exact(bp.point);
            out[0] = C64::from(d[0] * bp.normal.x + d[1] * bp.normal.y);
        })
        .unwrap();
        let u = solve_neumann(&a, &ZeroField(2), &g, &sp).unwrap();
        errors.push(rel_grad_error(&u, exact));
    }
    let r = rate(&errors);
    assert!((0.9..1.3).contains(&r), "rate {r} from {errors:?}");
}

#[test]
fn neumann_data_of_linear_function_is_boundary_flux() {
    let sp = space(&PolygonalDomain::l_shape(), 0.25, 1);
    let a = CoefficientTensor::laplacian();
    let u = FeSolution::new(sp.clone(), sp.interpolate_scalar(|p| [p.x, 1.0, 0.0, 0.0]));
    let g = extract_neumann_data(&a, &u, &ZeroField(2)).unwrap();
    // hat functions integrate to half the edge length on each incident edge
    let mesh = sp.mesh();
    let mut want = vec![C64::new(0.0, 0.0); sp.n_dofs()];
    for e in mesh.boundary_edges() {
        let len = mesh.vertices()[e.a].dist(mesh.vertices()[e.b]);
        want[e.a] += C64::from(0.5 * len * e.normal.x);
        want[e.b] += C64::from(0.5 * len * e.normal.x);
    }
    for (k, &i) in sp.boundary_dofs().iter().enumerate() {
        assert!((g.values[k] - want[i]).norm() < 1e-13, "dof {i}");
    }
    let z = extract_neumann_data(&a, &FeSolution::zero(sp.clone()), &ZeroField(2)).unwrap();
    assert_eq!(z.max_abs(), 0.0);
}

#[test]
fn residual_detects_noise() {
    let sp = space(&PolygonalDomain::unit_square(), 0.125, 1);
    let a = CoefficientTensor::laplacian();
    let h = trig(1.7);
    let u = solve_dirichlet(&a, &h, &sp).unwrap();
    assert!(residual(&a, &u, &h, BoundaryKind::Dirichlet).unwrap() <= 1e-10);
    let mut noisy = u.clone();
    for (k, i) in sp.interior_dofs().into_iter().enumerate() {
        noisy.dofs[i] += C64::from(if k % 2 == 0 { 1.0 } else { -1.0 });
    }
    assert!(residual(&a, &noisy, &h, BoundaryKind::Dirichlet).unwrap() > 1e-3);
}

#[test]
fn newton_potential_bounds_radial_bump() {
    let sq = PolygonalDomain::unit_square();
    let sp = space(&sq, 0.0625, 1);
    let a0 = CoefficientTensor::laplacian();
    let np = NewtonPotential::new(&a0, &sq, &sp, 0.0625, 3.0).unwrap();
    let bump = FnField::new(2, |p: Point2, o: &mut [C64]| {
        let (dx, dy) = (p.x - 0.5, p.y - 0.5);
        let t = 1.0 - (dx * dx + dy * dy) / 0.09;
        let f = if t > 0.0 { -4.0 * t / 0.09 } else { 0.0 };
        o[0] = C64::from(f * dx);
        o[1] = C64::from(f * dy);
    });
    let u = np.apply(&bump).unwrap();
    let bq = np.box_space().assembly_samples();
    let (lhs, rhs) = (u.gradient(bq).l2_norm(), bump.sample(bq).l2_norm());
    assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    // a gradient field is reproduced up to discretization error
    assert!(lhs >= 0.9 * rhs);
}

#[test]
fn newton_adjoint_pairing_on_box() {
    let sq = PolygonalDomain::unit_square();
    let sp = space(&sq, 0.125, 1);
    let a0 = CoefficientTensor::constant(1, 1, vec![C64::new(2.0, 0.3), C64::new(0.4, -0.2), C64::new(-0.1, 0.5), C64::new(1.5, 0.0)])
        .unwrap();
    let np = NewtonPotential::new(&a0, &sq, &sp, 0.125, 3.0).unwrap();
    let mask = |f: Box<dyn ArrayField>| {
        let d = sq.clone();
        FnField::new(2, move |p: Point2, o: &mut [C64]| {
            if d.contains(p) {
                f.eval(p, o)
            } else {
                o.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0))
            }
        })
    };
    let (f, g) = (mask(Box::new(trig(0.3))), mask(Box::new(trig(2.1))));
    let bq = np.box_space().assembly_samples();
    let lhs = np.apply(&f).unwrap().gradient(bq).pairing(&g.sample(bq)).unwrap();
    let rhs = f.sample(bq).pairing(&np.apply_adjoint(&g).unwrap().gradient(bq)).unwrap();
    assert!((lhs - rhs).norm() <= 1e-8 * lhs.norm().max(rhs.norm()));
}

fn discrete_harmonic(sp: &Arc<FeSpace>, f: impl Fn(Point2) -> [f64; 4]) -> FeSolution {
    let w = FeSolution::new(sp.clone(), sp.interpolate_scalar(f));
    let a = CoefficientTensor::laplacian();
    let q = sp.assembly_samples();
    let v = BvpSolver::new(sp.clone(), a, BoundaryKind::Dirichlet).unwrap().solve_array(&w.gradient(q).scaled(-ONE)).unwrap();
    w.combine(ONE, &v, ONE)
}

#[test]
fn caccioppoli_affine_and_cubic() {
    let sq = PolygonalDomain::unit_square();
    let a = CoefficientTensor::laplacian();
    let c = Point2::new(0.5, 0.5);
    let sp = space(&sq, 0.0625, 1);
    let affine = FeSolution::new(sp.clone(), sp.interpolate_scalar(|p| [p.x + 2.0 * p.y, 1.0, 2.0, 0.0]));
    for p in [0.5, 1.0, 1.5] {
        let r = caccioppoli_ratio(&a, &affine, &ZeroField(2), &sq, c, 0.2, p, sp.assembly_samples()).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "p={p}: {r}");
    }
    // Re z^3 = x^3 - 3 x y^2
    let cubic = |p: Point2| [p.x.powi(3) - 3.0 * p.x * p.y * p.y, 0.0, 0.0, 0.0];
    let ratios: Vec<f64> = [0.0625, 0.03125]
        .iter()
        .map(|&h| {
            let sp = space(&sq, h, 1);
            let u = discrete_harmonic(&sp, cubic);
            caccioppoli_ratio(&a, &u, &ZeroField(2), &sq, c, 0.2, 1.0, sp.assembly_samples()).unwrap()
        })
        .collect();
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    assert!(ratios[0] / ratios[1] < 2.0 && ratios[1] / ratios[0] < 2.0, "{ratios:?}");
}

fn arb_tensor() -> impl Strategy<Value = CoefficientTensor> {
    prop::collection::vec(-1.0f64..1.0, 8).prop_map(|v| {
        let g: Vec<C64> = v.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        let norm: f64 = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-9);
        // identity plus a perturbation of Frobenius norm 0.6
        let e = (0..4).map(|k| g[k] * (0.6 / norm) + if k == 0 || k == 3 { ONE } else { C64::new(0.0, 0.0) }).collect();
        CoefficientTensor::constant(1, 1, e).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn galerkin_orthogonality(a in arb_tensor(), seed in 0.1f64..3.0) {
        let sp = space(&PolygonalDomain::l_shape(), 0.125, 1);
        let h = trig(seed);
        let u = solve_dirichlet(&a, &h, &sp).unwrap();
        prop_assert!(residual(&a, &u, &h, BoundaryKind::Dirichlet).unwrap() <= 1e-10);
        prop_assert!(sp.boundary_dofs().iter().all(|&i| u.dofs[i].norm() == 0.0));
    }

    #[test]
    fn neumann_energy_bound(a in arb_tensor(), seed in 0.1f64..3.0) {
        let sp = space(&PolygonalDomain::unit_square(), 0.125, 1);
        let solver = BvpSolver::new(sp.clone(), a, BoundaryKind::Neumann).unwrap();
        let lambda = solver.report().lambda_hat;
        prop_assert!(lambda > 0.0);
        let h = trig(seed);
        let u = solver.solve(&h).unwrap();
        let q = sp.assembly_samples();
        prop_assert!(u.gradient(q).l2_norm() <= h.sample(q).l2_norm() / lambda * (1.0 + 1e-10));
    }

    #[test]
    fn load_of_discrete_gradient_is_stiffness_product(a in arb_tensor(), w in prop::collection::vec(-1.0f64..1.0, 25)) {
        let sp = space(&PolygonalDomain::unit_square(), 0.25, 1);
        prop_assert_eq!(sp.n_dofs(), 25);
        let wf = FeSolution::new(sp.clone(), w.iter().map(|&x| C64::from(x)).collect());
        let h = wf.gradient(sp.assembly_samples()).apply_tensor(&a).unwrap();
        let b = assemble_load(&sp, &h).unwrap();
        let sw = assemble_stiffness(&sp, &a).unwrap().matvec(&wf.dofs);
        for (x, y) in b.iter().zip(&sw) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }
}
