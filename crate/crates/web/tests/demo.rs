use elliptic_lab_web::{decay, garding_values, grid_view};

#[test]
fn grid_view_flattens_cubes() {
    let g = grid_view("unit_square", 6).unwrap();
    assert_eq!(g.cubes().len() % 3, 0);
    assert!((g.tail() - 0.0615234375).abs() < 1e-12);
    assert_eq!(g.polygon().len(), 8);
    let covered: f64 = g.cubes().chunks(3).map(|c| c[2] * c[2]).sum();
    assert!((covered + g.tail() - 1.0).abs() < 1e-12);
    assert!(grid_view("triangle", 4).is_err());
    assert_eq!(grid_view("l_shape", 4).unwrap().polygon().len(), 12);
}

#[test]
fn garding_curve_matches_one_minus_abs_rho() {
    let rhos = [-0.6, 0.0, 0.5, 0.9];
    let v = garding_values(&rhos, 0.25).unwrap();
    for (r, l) in rhos.iter().zip(&v) {
        assert!((l - (1.0 - r.abs())).abs() < 1e-8, "rho {r}: {l}");
    }
}

#[test]
fn decay_ratios_stay_below_c0_eps() {
    let d = decay(0.05, 2.0, 0.5, 0.125, 1).unwrap();
    assert!(d.converged());
    assert!(!d.ratios().is_empty());
    assert!(d.ratios().iter().all(|r| *r <= d.c0_hat() * 0.05 * 1.05));
    assert!(d.c2_observed() <= d.c2_predicted() * 1.05);
}
