use std::sync::Arc;

use elliptic_lab::field::{GradientArray, Samples};
use elliptic_lab::geometry::{Mesh, PolygonalDomain, WhitneyGrid};
use elliptic_lab::norms::{
    besov_boundary_seminorm, cube_gaussian_field, embedding_check, piecewise_field, sequence_holder_check,
    single_cube_field, smooth_field, trial_rng, BallRaster, BesovOptions, NormParams, WhitneyNorm,
};
use num_complex::Complex64;
use proptest::prelude::*;

type C64 = Complex64;
const ONE: C64 = C64::new(1.0, 0.0);

fn whitney(depth: u32) -> WhitneyNorm {
    let dom = PolygonalDomain::unit_square();
    let mesh = Arc::new(Mesh::rect_grid(&dom, 1.0 / 32.0).unwrap());
    WhitneyNorm::new(WhitneyGrid::build(&dom, depth).unwrap(), Arc::new(Samples::refined(mesh, 2))).unwrap()
}

fn constant(wn: &WhitneyNorm, c: C64) -> GradientArray {
    GradientArray::from_values(wn.samples().clone(), 1, vec![c; wn.samples().len()]).unwrap()
}

/// Gaussian cube fields, piecewise and smooth fields in turn.
fn random_field(wn: &WhitneyNorm, k: u64, width: usize) -> GradientArray {
    let mut rng = trial_rng(17, k);
    match k % 3 {
        0 => cube_gaussian_field(wn, width, &mut rng),
        1 => piecewise_field(wn.samples(), 6, width, &mut rng),
        _ => smooth_field(wn.samples(), 3, width, &mut rng),
    }
}

#[test]
fn constant_field_gives_covered_area() {
    let wn = whitney(6);
    let params = NormParams::new(2.0, 0.5).unwrap();
    // weight exponent p - 1 - ps vanishes, so the squared value is the covered area
    let covered: f64 = wn.grid().cubes().iter().map(|q| q.side * q.side).sum();
    let v = wn.value(&constant(&wn, ONE), &params).unwrap();
    assert!((v * v - covered).abs() < 1e-12);
    assert!((covered - (1.0 - wn.grid().tail_fraction())).abs() < 1e-12);
    assert_eq!(wn.value(&constant(&wn, C64::new(0.0, 0.0)), &params).unwrap(), 0.0);
}

#[test]
fn l2_bracket_over_random_fields() {
    let wn = whitney(6);
    let params = NormParams::new(2.0, 0.5).unwrap();
    for k in 0..100 {
        let h = random_field(&wn, k, 2);
        let r = wn.value(&h, &params).unwrap() / h.l2_norm();
        assert!((0.125..=8.0).contains(&r), "field {k}: {r}");
    }
}

#[test]
fn whitney_and_ball_forms_comparable() {
    let dom = PolygonalDomain::unit_square();
    let mesh = Arc::new(Mesh::rect_grid(&dom, 1.0 / 32.0).unwrap());
    let raster = BallRaster::new(&dom, mesh, 256).unwrap();
    let wn = WhitneyNorm::new(WhitneyGrid::build(&dom, 6).unwrap(), raster.samples().clone()).unwrap();
    let params = NormParams::new(2.0, 0.5).unwrap();
    for k in 0..4 {
        let h = piecewise_field(raster.samples(), 4, 1, &mut trial_rng(3, k));
        let r = wn.value(&h, &params).unwrap() / raster.norm(&h, &params).unwrap().value;
        assert!(r > 1.0 / 3.0 && r < 3.0, "field {k}: {r}");
    }
}

#[test]
fn pairing_examples() {
    let wn = whitney(5);
    let unit = constant(&wn, C64::from(1.0 / wn.restrict_covered(&constant(&wn, ONE)).unwrap().l2_norm()));
    assert!((wn.pairing_covered(&unit, &unit).unwrap() - ONE).norm() < 1e-12);
    // disjoint slots
    let n = wn.samples().len();
    let mut a = vec![C64::new(0.0, 0.0); 2 * n];
    let mut b = a.clone();
    for i in 0..n {
        a[2 * i] = C64::new(i as f64, 1.0);
        b[2 * i + 1] = C64::new(1.0, -(i as f64));
    }
    let f = GradientArray::from_values(wn.samples().clone(), 2, a).unwrap();
    let g = GradientArray::from_values(wn.samples().clone(), 2, b).unwrap();
    assert!(wn.pairing_covered(&f, &g).unwrap().norm() < 1e-12);
}

#[test]
fn embedding_single_cube_and_random_fields() {
    let wn = whitney(5);
    let q = NormParams::new(1.0, 0.3).unwrap();
    let r = NormParams::new(2.0, 0.6).unwrap();
    let diam = 2f64.sqrt();
    let k = 7;
    let cube = wn.grid().cubes()[k];
    let psi = single_cube_field(&wn, k, 1, &mut trial_rng(2, 0));
    let rep = embedding_check(&psi, &wn, &q, &r, diam).unwrap();
    let a = wn.cube_averages(&psi).unwrap()[k];
    let top = a.sqrt() * cube.side.powf(q.cube_exponent());
    let bottom = (a * cube.side.powf(r.cube_exponent())).sqrt() * diam.powf(rep.diam_exponent);
    assert!((rep.ratio.unwrap() - top / bottom).abs() < 1e-12 * top / bottom);
    assert!(embedding_check(&constant(&wn, C64::new(0.0, 0.0)), &wn, &q, &r, diam).unwrap().ratio.is_none());
    let worst = (0..200)
        .map(|t| embedding_check(&random_field(&wn, t, 1), &wn, &q, &r, diam).unwrap().ratio.unwrap())
        .fold(0.0, f64::max);
    assert!(worst.is_finite() && worst > 0.0);
}

#[test]
fn sequence_holder_single_cube_is_exact() {
    let wn = whitney(5);
    let a = NormParams::new(2.0, 0.5).unwrap();
    let b = NormParams::new(4.0, 0.25).unwrap();
    let h = single_cube_field(&wn, 3, 2, &mut trial_rng(9, 1));
    let r = sequence_holder_check(&h, &wn, &a, &b, 0.5).unwrap().unwrap();
    assert!((r - 1.0).abs() < 1e-12);
    assert!(sequence_holder_check(&constant(&wn, C64::new(0.0, 0.0)), &wn, &a, &b, 0.5).unwrap().is_none());
}

#[test]
fn besov_of_coordinate_converges() {
    let dom = PolygonalDomain::unit_square();
    let params = NormParams::new(2.0, 0.5).unwrap();
    let f = |x: elliptic_lab::geometry::Point2, o: &mut [C64]| o[0] = C64::from(x.x);
    let coarse = besov_boundary_seminorm(&dom, 1, f, &params, BesovOptions { panels_per_edge: 8, levels: 4 }).unwrap();
    let fine = besov_boundary_seminorm(&dom, 1, f, &params, BesovOptions { panels_per_edge: 16, levels: 4 }).unwrap();
    assert!(coarse.converged && fine.converged);
    assert!((coarse.value - fine.value).abs() < 0.02 * fine.value, "{} vs {}", coarse.value, fine.value);
}

fn arb_params(lo: f64, hi: f64) -> impl Strategy<Value = NormParams> {
    (0.05f64..0.95, 0.0f64..1.0).prop_filter_map("admissible", move |(s, t)| {
        let p_min = 1.0 / (1.0 + s);
        let p = lo.max(p_min + 1e-3) + t * (hi - lo.max(p_min + 1e-3));
        NormParams::new(p, s).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn homogeneity(k in 0u64..1000, params in arb_params(0.7, 6.0)) {
        let wn = whitney(5);
        let h = random_field(&wn, k, 2);
        let v = wn.value(&h, &params).unwrap();
        let v3 = wn.value(&h.scaled(C64::new(0.0, 3.0)), &params).unwrap();
        prop_assert!((v3 - 3.0 * v).abs() <= 1e-12 * v3);
    }

    #[test]
    fn single_cube_closed_form(q in 0usize..40, params in arb_params(0.7, 6.0)) {
        let wn = whitney(5);
        let h = single_cube_field(&wn, q, 1, &mut trial_rng(4, q as u64));
        let cube = wn.grid().cubes()[q];
        let c = h.at(wn.members(q)[0])[0].norm();
        let want = c * cube.side.powf(params.cube_exponent() / params.p());
        let got = wn.value(&h, &params).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn quasi_norm_inequality(k in 0u64..1000, params in arb_params(0.5, 1.0)) {
        let wn = whitney(5);
        let (f, g) = (random_field(&wn, k, 2), random_field(&wn, k + 1, 2));
        let p = params.p();
        let lhs = wn.value(&f.combine(ONE, &g, ONE).unwrap(), &params).unwrap().powf(p);
        let rhs = wn.value(&f, &params).unwrap().powf(p) + wn.value(&g, &params).unwrap().powf(p);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn triangle_inequality(k in 0u64..1000, params in arb_params(1.0, 8.0)) {
        let wn = whitney(5);
        let (f, g) = (random_field(&wn, k, 2), random_field(&wn, k + 2, 2));
        let lhs = wn.value(&f.combine(ONE, &g, C64::new(0.0, -1.0)).unwrap(), &params).unwrap();
        let rhs = wn.value(&f, &params).unwrap() + wn.value(&g, &params).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn holder_duality_constant_one(k in 0u64..1000, params in arb_params(1.0, 8.0)) {
        let wn = whitney(5);
        let (f, g) = (random_field(&wn, k, 2), random_field(&wn, k + 5, 2));
        let pair = wn.pairing_covered(&f, &g).unwrap().norm();
        let bound = wn.value(&f, &params.dual()).unwrap() * wn.value(&g, &params).unwrap();
        prop_assert!(pair <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn deeper_grids_never_decrease_the_norm(k in 0u64..1000, params in arb_params(0.7, 6.0)) {
        let dom = PolygonalDomain::unit_square();
        let mesh = Arc::new(Mesh::rect_grid(&dom, 1.0 / 32.0).unwrap());
        let samples = Arc::new(Samples::refined(mesh, 2));
        let h = smooth_field(&samples, 3, 1, &mut trial_rng(8, k));
        let mut prev = 0.0;
        for depth in 3..=7 {
            let wn = WhitneyNorm::new(WhitneyGrid::build(&dom, depth).unwrap(), samples.clone()).unwrap();
            let v = wn.value(&h, &params).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn sequence_interpolation_bound(k in 0u64..1000) {
        let wn = whitney(5);
        let a = NormParams::new(2.0, 0.5).unwrap();
        let b = NormParams::new(4.0, 0.25).unwrap();
        let r = sequence_holder_check(&random_field(&wn, k, 2), &wn, &a, &b, 0.5).unwrap().unwrap();
        prop_assert!(r <= 1.0 + 1e-12);
    }
}
