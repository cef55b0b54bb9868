//! Norm suite: L2 identification, ball/Whitney brackets, quasi-norm and
//! Holder checks, embeddings, sequence interpolation, growth exponents and
//! the boundary Besov seminorm.

use std::sync::Arc;

use elliptic_lab::field::{GradientArray, Samples};
use elliptic_lab::geometry::{Point2, PolygonalDomain};
use elliptic_lab::norms::{
    besov_boundary_seminorm, boundary_ramp, cube_gaussian_field, embedding_check, fit_slope, piecewise_field,
    sequence_holder_check, smooth_field, trial_rng, weighted, BallRaster, BesovOptions, NormParams, WhitneyNorm,
};
use elliptic_lab::solver::structured_mesh_for;
use elliptic_lab::sum::ordered_map;
use num_complex::Complex64;
use rand::Rng;

use super::{case_ps, stream, whitney_norm, ExpError, ExperimentOutput};
use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{Op, Table};

type C64 = Complex64;
const WIDTH: usize = 2;

fn rng(cfg: &ExperimentConfig, block: u64, i: usize) -> impl Rng {
    trial_rng(cfg.seed ^ stream::NORM_PAIRS, (block << 32) | i as u64)
}

/// Mixed family of test fields on the Whitney samples.
fn field(wn: &WhitneyNorm, domain: &PolygonalDomain, k: usize, rng: &mut impl Rng) -> GradientArray {
    let s = wn.samples();
    match k % 4 {
        0 => cube_gaussian_field(wn, WIDTH, rng),
        1 => piecewise_field(s, 8, WIDTH, rng),
        2 => smooth_field(s, 3, WIDTH, rng),
        _ => weighted(&smooth_field(s, 3, WIDTH, rng), |x| boundary_ramp(domain, x)),
    }
}

fn min_max(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExpError> {
    let spec = cfg.norms.as_ref().ok_or(ConfigError::MissingSection("norms"))?;
    if spec.depths.is_empty() {
        return Err(ConfigError::Invalid("norms.depths is empty".into()).into());
    }
    let domain = cfg.domain()?;
    let mesh = Arc::new(structured_mesh_for(&domain, spec.mesh_spacing, 1)?);
    let samples = Arc::new(Samples::assembly(mesh.clone()));
    let (d_lo, d_hi) = (spec.depths[0], *spec.depths.last().unwrap());
    let wn = whitney_norm(cfg, &domain, d_lo, &samples)?;
    let wn_hi = whitney_norm(cfg, &domain, d_hi, &samples)?;
    let mut t = Table::new("norms", cfg);

    // L2 identification at (2, 1/2)
    let p2 = cfg.params(2.0, 0.5)?;
    let ratios = ordered_map(spec.l2_fields, |i| -> Result<f64, ExpError> {
        let h = field(&wn_hi, &domain, 1 + i % 3, &mut rng(cfg, 1, i));
        Ok(wn_hi.value(&h, &p2)? / h.l2_norm())
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let (lo, hi) = min_max(ratios.into_iter());
    let case = format!("l2 depth={d_hi} fields={}", spec.l2_fields);
    t.check(case.clone(), "min_whitney_over_l2", lo, "l2_lower", Op::Ge)?;
    t.check(case, "max_whitney_over_l2", hi, "l2_upper", Op::Le)?;

    ball_vs_whitney(cfg, &domain, &mesh, &mut t)?;

    // p <= 1 quasi-norm inequality
    let [qp, qs] = spec.quasi;
    let qparams = cfg.params(qp, qs)?;
    let worst = max_over(spec.quasi_pairs, |i| {
        let mut r = rng(cfg, 2, i);
        let f = field(&wn, &domain, i, &mut r);
        let g = field(&wn, &domain, i + 1, &mut r);
        let sum = f.combine(C64::new(1.0, 0.0), &g, C64::new(1.0, 0.0))?;
        let p = qparams.p();
        let lhs = wn.value(&sum, &qparams)?.powf(p);
        let rhs = wn.value(&f, &qparams)?.powf(p) + wn.value(&g, &qparams)?.powf(p);
        Ok(if rhs > 0.0 { lhs / rhs } else { 0.0 })
    })?;
    t.check(format!("{} pairs={}", case_ps(qp, qs), spec.quasi_pairs), "max_quasi_ratio", worst, "quasi_max", Op::Le)?;

    // Holder pairing with constant one, and its equality case
    for (k, &[p, s]) in spec.holder_points.iter().enumerate() {
        let params = cfg.params(p, s)?;
        let dual = params.dual();
        let worst = max_over(spec.holder_pairs, |i| {
            let mut r = rng(cfg, 10 + k as u64, i);
            let f = field(&wn, &domain, i, &mut r);
            let g = field(&wn, &domain, i + 2, &mut r);
            let den = wn.value(&f, &dual)? * wn.value(&g, &params)?;
            Ok(if den > 0.0 { wn.pairing_covered(&f, &g)?.norm() / den } else { 0.0 })
        })?;
        let case = format!("{} pairs={}", case_ps(p, s), spec.holder_pairs);
        t.check(case.clone(), "max_holder_ratio", worst, "holder_max", Op::Le)?;
        let g = field(&wn, &domain, 2, &mut rng(cfg, 10 + k as u64, spec.holder_pairs));
        let j = wn.duality_map(&g, &params)?;
        let eq = wn.pairing_covered(&j, &g)?.norm() / (wn.value(&j, &dual)? * wn.value(&g, &params)?);
        t.record(case, "duality_map_ratio", eq);
    }

    // embeddings between (q, sigma) and (r, omega)
    let diam = domain.diameter();
    for (k, &[q, sigma, r, omega]) in spec.embedding_pairs.iter().enumerate() {
        let (qp, rp) = (cfg.params(q, sigma)?, cfg.params(r, omega)?);
        let worst = max_over(spec.embedding_fields, |i| {
            let psi = field(&wn, &domain, i, &mut rng(cfg, 100 + k as u64, i));
            Ok(embedding_check(&psi, &wn, &qp, &rp, diam)?.ratio.unwrap_or(0.0))
        })?;
        let case = format!("q={q} sigma={sigma} r={r} omega={omega}");
        t.check(case, "max_embedding_ratio", worst, "embedding_max", Op::Le)?;
    }

    // sequence Holder interpolation
    let [p0, s0, p1, s1, tt] = spec.sequence;
    let (a, b) = (cfg.params(p0, s0)?, cfg.params(p1, s1)?);
    let worst = max_over(spec.sequence_fields, |i| {
        let h = field(&wn, &domain, i, &mut rng(cfg, 3, i));
        Ok(sequence_holder_check(&h, &wn, &a, &b, tt)?.unwrap_or(0.0))
    })?;
    let case = format!("({p0},{s0})-({p1},{s1}) t={tt}");
    t.check(case, "max_sequence_ratio", worst, "sequence_max", Op::Le)?;

    growth(cfg, &domain, &mesh, &mut t)?;

    let besov_params = cfg.params(2.0, 0.5)?;
    let opts = BesovOptions { panels_per_edge: spec.besov_panels, levels: spec.besov_levels };
    let bv = besov_boundary_seminorm(
        &domain,
        WIDTH,
        |x: Point2, out: &mut [C64]| {
            out[0] = C64::new(x.x * x.x - x.y, 0.0);
            out[1] = C64::new((3.0 * x.y).sin(), x.x);
        },
        &besov_params,
        opts,
    )?;
    t.record("boundary trace p=2 s=0.5", "besov_seminorm", bv.value);
    t.record("boundary trace p=2 s=0.5", "besov_relative_change", bv.relative_change);

    Ok(ExperimentOutput { rows: t.into_rows(), artifacts: Vec::new() })
}

fn max_over(n: usize, f: impl Fn(usize) -> Result<f64, ExpError> + Sync + Send) -> Result<f64, ExpError> {
    let vals = ordered_map(n, f);
    let mut m: f64 = 0.0;
    for v in vals {
        m = m.max(v?);
    }
    Ok(m)
}

/// Ratio brackets of the ball form over the Whitney form at each depth, and
/// their relative drift between the first and the last depth.
fn ball_vs_whitney(
    cfg: &ExperimentConfig,
    domain: &PolygonalDomain,
    mesh: &Arc<elliptic_lab::geometry::Mesh>,
    t: &mut Table<'_>,
) -> Result<(), ExpError> {
    let spec = cfg.norms.as_ref().unwrap();
    let raster = BallRaster::new(domain, mesh.clone(), spec.raster)?;
    let rs = raster.samples();
    let wns = spec.depths.iter().map(|&d| whitney_norm(cfg, domain, d, rs)).collect::<Result<Vec<_>, _>>()?;
    let mut lattice = Vec::new();
    for &p in &spec.lattice_p {
        for &s in &spec.lattice_s {
            lattice.push(cfg.params(p, s)?);
        }
    }
    // ratio[field][depth][param]
    let per_field = ordered_map(spec.bracket_fields, |i| -> Result<Vec<Vec<f64>>, ExpError> {
        let mut r = rng(cfg, 4, i);
        let base = if i % 2 == 0 { piecewise_field(rs, 8, WIDTH, &mut r) } else { smooth_field(rs, 3, WIDTH, &mut r) };
        let h = weighted(&base, |x| boundary_ramp(domain, x));
        let ball = raster.averages(&h)?;
        let mut out = Vec::with_capacity(wns.len());
        for wn in &wns {
            let avg = wn.cube_averages(&h)?;
            out.push(lattice.iter().map(|pp| ball.norm(pp).value / wn.norm_from_averages(&avg, pp)).collect());
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    for (k, pp) in lattice.iter().enumerate() {
        let case = case_ps(pp.p(), pp.s());
        let mut brackets = Vec::new();
        for (di, &d) in spec.depths.iter().enumerate() {
            let (lo, hi) = min_max(per_field.iter().map(|f| f[di][k]));
            t.record(format!("{case} depth={d}"), "ball_over_whitney_min", lo);
            t.record(format!("{case} depth={d}"), "ball_over_whitney_max", hi);
            brackets.push((lo, hi));
        }
        let (first, last) = (brackets[0], *brackets.last().unwrap());
        let drift = ((last.0 / first.0) - 1.0).abs().max(((last.1 / first.1) - 1.0).abs());
        t.check(case, "bracket_depth_drift", drift, "depth_stability", Op::Le)?;
    }
    Ok(())
}

/// Log-log slopes of `|1_B|_{L1} / |1_B|_{p,s}` and `|1_B|_{p,s}` against the
/// radius, for balls centred on the boundary.
fn growth(
    cfg: &ExperimentConfig,
    domain: &PolygonalDomain,
    mesh: &Arc<elliptic_lab::geometry::Mesh>,
    t: &mut Table<'_>,
) -> Result<(), ExpError> {
    let spec = cfg.norms.as_ref().unwrap();
    let [p, s] = spec.growth_params;
    let params: NormParams = cfg.params(p, s)?;
    let raster = BallRaster::new(domain, mesh.clone(), spec.raster)?;
    let rs = raster.samples();
    let x0 = Point2::new(spec.growth_point[0], spec.growth_point[1]);
    let (mut lr, mut y31, mut y32) = (Vec::new(), Vec::new(), Vec::new());
    for &radius in &spec.growth_radii {
        let mut v = vec![C64::new(0.0, 0.0); rs.len() * WIDTH];
        let mut l1 = Vec::new();
        for (i, x) in rs.points.iter().enumerate() {
            if x.dist(x0) < radius {
                v[i * WIDTH] = C64::new(1.0, 0.0);
                l1.push(rs.weights[i]);
            }
        }
        let h = GradientArray::from_values(rs.clone(), WIDTH, v)?;
        let norm = raster.norm(&h, &params)?.value;
        let l1 = elliptic_lab::sum::pairwise_sum(&l1);
        t.record(format!("R={radius}"), "indicator_norm", norm);
        lr.push(radius.ln());
        y31.push((l1 / norm).ln());
        y32.push(norm.ln());
    }
    let d = 2.0;
    let e31 = d - 1.0 + s - (d - 1.0) / p;
    let e32 = 1.0 - s + (d - 1.0) / p;
    let case = format!("{} x0=({},{})", case_ps(p, s), x0.x, x0.y);
    t.check_near(case.clone(), "l1_growth_slope", fit_slope(&lr, &y31), "slope_tol", Op::Near, Some(e31))?;
    t.check_near(case, "indicator_growth_slope", fit_slope(&lr, &y32), "slope_tol", Op::Near, Some(e32))?;
    Ok(())
}
