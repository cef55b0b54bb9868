//! Weighted averaged norms `L^{p,s}_av`: Whitney-cube and ball forms, the
//! cube pairing and duality map, embeddings, sequence-space Holder checks,
//! the boundary Besov seminorm, and operator-norm probing.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::field::{GradientArray, Samples};
use crate::geometry::{gauss_legendre, Mesh, Point2, PolygonalDomain, WhitneyGrid, DIM};
use crate::sum::{ordered_map, pairwise_sum, pairwise_sum_complex};

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);
const D: f64 = DIM as f64;

/// Lower admissible exponent `(d-1)/(d-1+s)`.
pub fn default_p_min(s: f64) -> f64 {
    (D - 1.0) / (D - 1.0 + s)
}

/// Exponent pair `(p, s)`; `p` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    p: f64,
    s: f64,
    p_min: f64,
}

impl NormParams {
    pub fn new(p: f64, s: f64) -> Result<Self> {
        Self::with_p_min(p, s, default_p_min(s))
    }

    pub fn with_p_min(p: f64, s: f64, p_min: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(LabError::InvalidParameter(format!("s = {s} outside (0, 1)")));
        }
        if p.is_nan() || p <= p_min {
            return Err(LabError::InvalidParameter(format!("p = {p} must exceed p_min = {p_min:.6}")));
        }
        Ok(Self { p, s, p_min })
    }

    /// No validation; used for dual exponents, which may leave the window.
    pub fn raw(p: f64, s: f64) -> Self {
        Self { p, s, p_min: default_p_min(s.clamp(1e-12, 1.0)) }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn is_infinite(&self) -> bool {
        self.p.is_infinite()
    }

    /// `1/p' = max(0, 1 - 1/p)`.
    pub fn p_prime(&self) -> f64 {
        let inv = (1.0 - 1.0 / self.p).max(0.0);
        if inv == 0.0 {
            f64::INFINITY
        } else {
            1.0 / inv
        }
    }

    /// `s' = (1 - s) + (d-1) max(1/p - 1, 0)`.
    pub fn s_prime(&self) -> f64 {
        (1.0 - self.s) + (D - 1.0) * (1.0 / self.p - 1.0).max(0.0)
    }

    pub fn dual(&self) -> NormParams {
        NormParams::raw(self.p_prime(), self.s_prime())
    }

    /// Exponent of `l(Q)` in a cube term, `(d-1) + p - ps`.
    pub fn cube_exponent(&self) -> f64 {
        D - 1.0 + self.p - self.p * self.s
    }
}

impl fmt::Display for NormParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p={}, s={})", self.p, self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormForm {
    Ball,
    Whitney,
}

impl fmt::Display for NormForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormForm::Ball => "ball",
            NormForm::Whitney => "whitney",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormValue {
    pub value: f64,
    pub form: NormForm,
    pub params: NormParams,
    pub tail_fraction: f64,
    pub depth: Option<u32>,
}

impl NormValue {
    pub const CSV_HEADER: &'static str = "p,s,form,value,tail_fraction,depth";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.12e},{:.6},{}",
            self.params.p,
            self.params.s,
            self.form,
            self.value,
            self.tail_fraction,
            self.depth.map(|d| d.to_string()).unwrap_or_default()
        )
    }
}

/// A Whitney grid together with the assignment of samples to cubes.
///
/// Cube averages are `a_Q = sum_{x_i in Q} w_i |H(x_i)|^2 / l(Q)^d`, so at
/// `(p, s) = (2, 1/2)` the norm is the sampled `L^2` norm over the covered region.
#[derive(Debug, Clone)]
pub struct WhitneyNorm {
    grid: WhitneyGrid,
    samples: Arc<Samples>,
    members: Vec<Vec<usize>>,
    covered: Vec<bool>,
}

impl WhitneyNorm {
    pub fn new(grid: WhitneyGrid, samples: Arc<Samples>) -> Result<Self> {
        if grid.is_empty() {
            return Err(LabError::EmptyGrid);
        }
        let mut members = vec![Vec::new(); grid.len()];
        let mut covered = vec![false; samples.len()];
        for (i, &p) in samples.points.iter().enumerate() {
            if let Some(q) = grid.locate(p) {
                members[q].push(i);
                covered[i] = true;
            }
        }
        Ok(Self { grid, samples, members, covered })
    }

    pub fn grid(&self) -> &WhitneyGrid {
        &self.grid
    }

    pub fn samples(&self) -> &Arc<Samples> {
        &self.samples
    }

    pub fn members(&self, q: usize) -> &[usize] {
        &self.members[q]
    }

    pub fn is_covered(&self, i: usize) -> bool {
        self.covered[i]
    }

    fn check(&self, h: &GradientArray) -> Result<()> {
        if !Arc::ptr_eq(h.samples(), &self.samples) {
            return Err(LabError::ShapeMismatch {
                expected: "field on the norm's sample set".into(),
                found: format!("field on {} other samples", h.samples().len()),
            });
        }
        Ok(())
    }

    pub fn cube_averages(&self, h: &GradientArray) -> Result<Vec<f64>> {
        self.check(h)?;
        let sq = h.pointwise_sq();
        Ok(ordered_map(self.grid.len(), |q| {
            let terms: Vec<f64> = self.members[q].iter().map(|&i| self.samples.weights[i] * sq[i]).collect();
            pairwise_sum(&terms) / self.grid.cubes()[q].volume()
        }))
    }

    /// Norm from precomputed cube averages.
    pub fn norm_from_averages(&self, avg: &[f64], params: &NormParams) -> f64 {
        let cubes = self.grid.cubes();
        if params.is_infinite() {
            return avg.iter().zip(cubes).map(|(a, q)| a.sqrt() * q.side.powf(1.0 - params.s)).fold(0.0, f64::max);
        }
        let p = params.p;
        let e = params.cube_exponent();
        let terms: Vec<f64> = avg.iter().zip(cubes).map(|(a, q)| a.powf(p / 2.0) * q.side.powf(e)).collect();
        pairwise_sum(&terms).powf(1.0 / p)
    }

    pub fn value(&self, h: &GradientArray, params: &NormParams) -> Result<f64> {
        Ok(self.norm_from_averages(&self.cube_averages(h)?, params))
    }

    pub fn norm(&self, h: &GradientArray, params: &NormParams) -> Result<NormValue> {
        Ok(NormValue {
            value: self.value(h, params)?,
            form: NormForm::Whitney,
            params: *params,
            tail_fraction: self.grid.tail_fraction(),
            depth: Some(self.grid.depth()),
        })
    }

    /// `sum conj(F) G w` over samples lying in some cube.
    pub fn pairing_covered(&self, f: &GradientArray, g: &GradientArray) -> Result<C64> {
        self.check(f)?;
        self.check(g)?;
        if f.width() != g.width() {
            return Err(LabError::ShapeMismatch { expected: format!("width {}", f.width()), found: format!("{}", g.width()) });
        }
        let per_cube = ordered_map(self.grid.len(), |q| {
            let t: Vec<C64> = self.members[q]
                .iter()
                .map(|&i| {
                    let s: C64 = f.at(i).iter().zip(g.at(i)).map(|(a, b)| a.conj() * b).sum();
                    s * self.samples.weights[i]
                })
                .collect();
            pairwise_sum_complex(&t)
        });
        Ok(pairwise_sum_complex(&per_cube))
    }

    /// `H` with the samples outside every cube set to zero.
    pub fn restrict_covered(&self, h: &GradientArray) -> Result<GradientArray> {
        self.check(h)?;
        let w = h.width();
        let mut v = h.values().to_vec();
        for (i, c) in self.covered.iter().enumerate() {
            if !c {
                v[i * w..(i + 1) * w].iter_mut().for_each(|x| *x = ZERO);
            }
        }
        GradientArray::from_values(self.samples.clone(), w, v)
    }

    /// Duality map `J(F) = F a_Q^{(p-2)/2} l(Q)^{p(1-s)-1}` on each cube, zero
    /// off the cubes. `<J(F), F> = |F|^p` and `|J(F)|_{p',1-s} = |F|^{p-1}`.
    pub fn duality_map(&self, f: &GradientArray, params: &NormParams) -> Result<GradientArray> {
        let p = params.p;
        if !(1.0..f64::INFINITY).contains(&p) {
            return Err(LabError::InvalidParameter(format!("duality map needs 1 <= p < inf, got {p}")));
        }
        let avg = self.cube_averages(f)?;
        let w = f.width();
        let mut v = vec![ZERO; f.values().len()];
        for (q, cube) in self.grid.cubes().iter().enumerate() {
            if avg[q] == 0.0 {
                continue;
            }
            let c = avg[q].powf((p - 2.0) / 2.0) * cube.side.powf(p * (1.0 - params.s) - 1.0);
            for &i in &self.members[q] {
                for k in 0..w {
                    v[i * w + k] = f.at(i)[k] * c;
                }
            }
        }
        GradientArray::from_values(self.samples.clone(), w, v)
    }
}

pub fn lps_norm_whitney(h: &GradientArray, grid: &WhitneyGrid, params: &NormParams) -> Result<NormValue> {
    WhitneyNorm::new(grid.clone(), h.samples().clone())?.norm(h, params)
}

/// Pixel raster over a domain for the ball form of the norm.
#[derive(Debug, Clone)]
pub struct BallRaster {
    origin: Point2,
    delta: f64,
    nx: usize,
    ny: usize,
    /// Sample index of each pixel (row-major), if the pixel center is in the domain.
    pixel_sample: Vec<Option<usize>>,
    dist: Vec<f64>,
    samples: Arc<Samples>,
    area: f64,
}

/// Fewest pixels a ball may contain before it is treated as unresolved.
pub const MIN_BALL_PIXELS: usize = 8;

impl BallRaster {
    /// `n` pixels across the longer side of the bounding box.
    pub fn new(domain: &PolygonalDomain, mesh: Arc<Mesh>, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(LabError::InvalidParameter(format!("raster of {n} pixels is too coarse")));
        }
        let bb = domain.bbox();
        let delta = bb.width().max(bb.height()) / n as f64;
        let nx = (bb.width() / delta).round() as usize;
        let ny = (bb.height() / delta).round() as usize;
        let mut pts = Vec::new();
        let mut idx = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let p = Point2::new(bb.min.x + (i as f64 + 0.5) * delta, bb.min.y + (j as f64 + 0.5) * delta);
                if domain.contains(p) {
                    pts.push(p);
                    idx.push(j * nx + i);
                }
            }
        }
        let weights = vec![delta * delta; pts.len()];
        let (samples, kept) = Samples::at_points(mesh, &pts, &weights);
        let mut pixel_sample = vec![None; nx * ny];
        let mut dist = vec![0.0; nx * ny];
        for (si, &k) in kept.iter().enumerate() {
            pixel_sample[idx[k]] = Some(si);
            dist[idx[k]] = domain.distance_to_boundary(pts[k]);
        }
        Ok(Self { origin: bb.min, delta, nx, ny, pixel_sample, dist, samples: Arc::new(samples), area: domain.area() })
    }

    pub fn samples(&self) -> &Arc<Samples> {
        &self.samples
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    /// Inner averages `avg_{B(x, dist/2)} |H|^2` at every pixel whose ball holds
    /// at least [`MIN_BALL_PIXELS`] pixels.
    pub fn averages(&self, h: &GradientArray) -> Result<BallAverages> {
        if !Arc::ptr_eq(h.samples(), &self.samples) {
            return Err(LabError::ShapeMismatch { expected: "field on the raster samples".into(), found: "other samples".into() });
        }
        let sq = h.pointwise_sq();
        let (nx, ny) = (self.nx, self.ny);
        // row prefix sums of |H|^2
        let mut prefix = vec![0.0; ny * (nx + 1)];
        for j in 0..ny {
            for i in 0..nx {
                let v = self.pixel_sample[j * nx + i].map_or(0.0, |s| sq[s]);
                prefix[j * (nx + 1) + i + 1] = prefix[j * (nx + 1) + i] + v;
            }
        }
        let rows = ordered_map(ny, |j| {
            let mut out = Vec::with_capacity(nx);
            let mut skipped = 0usize;
            for i in 0..nx {
                if self.pixel_sample[j * nx + i].is_none() {
                    continue;
                }
                let d = self.dist[j * nx + i];
                let r = 0.5 * d / self.delta;
                let kr = r.floor() as isize;
                let (mut sum, mut count) = (0.0, 0usize);
                for k in -kr..=kr {
                    let w = (r * r - (k * k) as f64).sqrt().floor() as isize;
                    let jj = j as isize + k;
                    let lo = (i as isize - w).max(0) as usize;
                    let hi = ((i as isize + w) as usize).min(nx - 1);
                    if jj < 0 || jj >= ny as isize || lo > hi {
                        continue;
                    }
                    let base = jj as usize * (nx + 1);
                    sum += prefix[base + hi + 1] - prefix[base + lo];
                    count += hi + 1 - lo;
                }
                if count < MIN_BALL_PIXELS {
                    skipped += 1;
                } else {
                    out.push((sum / count as f64, d));
                }
            }
            (out, skipped)
        });
        let skipped: usize = rows.iter().map(|r| r.1).sum();
        let cell = self.delta * self.delta;
        Ok(BallAverages {
            rows: rows.into_iter().map(|r| r.0).collect(),
            cell,
            tail_fraction: skipped as f64 * cell / self.area,
        })
    }

    /// Ball form with inner radius `dist/2`; unresolved balls count as tail.
    pub fn norm(&self, h: &GradientArray, params: &NormParams) -> Result<NormValue> {
        Ok(self.averages(h)?.norm(params))
    }
}

/// Per-pixel inner averages, reusable across exponents.
#[derive(Debug, Clone)]
pub struct BallAverages {
    rows: Vec<Vec<(f64, f64)>>,
    cell: f64,
    tail_fraction: f64,
}

impl BallAverages {
    pub fn norm(&self, params: &NormParams) -> NormValue {
        let p = params.p;
        let value = if p.is_infinite() {
            self.rows.iter().flatten().map(|(a, d)| a.sqrt() * d.powf(1.0 - params.s)).fold(0.0, f64::max)
        } else {
            let e = p - 1.0 - p * params.s;
            let per_row: Vec<f64> = self
                .rows
                .iter()
                .map(|r| pairwise_sum(&r.iter().map(|(a, d)| a.powf(p / 2.0) * d.powf(e)).collect::<Vec<_>>()))
                .collect();
            (pairwise_sum(&per_row) * self.cell).powf(1.0 / p)
        };
        NormValue { value, form: NormForm::Ball, params: *params, tail_fraction: self.tail_fraction, depth: None }
    }
}

/// Outcome of the embedding comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingReport {
    /// `None` when both norms vanish.
    pub ratio: Option<f64>,
    pub on_scaling_line: bool,
    pub in_bounded_window: bool,
    pub diam_exponent: f64,
}

/// Which of the two admissibility conditions `(q, sigma)`, `(r, omega)` meet.
pub fn embedding_conditions(q: &NormParams, r: &NormParams) -> Result<(bool, bool)> {
    let (sigma, omega) = (q.s, r.s);
    if !(sigma < omega) {
        return Err(LabError::InvalidParameter(format!("need sigma < omega, got {sigma} >= {omega}")));
    }
    let inv = |p: f64| if p.is_infinite() { 0.0 } else { (D - 1.0) / p };
    let line = ((inv(q.p) - sigma) - (inv(r.p) - omega)).abs() < 1e-12;
    let window = inv(r.p) >= 0.0 && inv(r.p) <= inv(q.p) + omega - sigma + 1e-12;
    if !line && !window {
        return Err(LabError::InvalidParameter(format!(
            "(d-1)/q - sigma = {:.4} differs from (d-1)/r - omega = {:.4}, and (d-1)/r = {:.4} exceeds (d-1)/q + omega - sigma = {:.4}",
            inv(q.p) - sigma,
            inv(r.p) - omega,
            inv(r.p),
            inv(q.p) + omega - sigma
        )));
    }
    Ok((line, window))
}

/// `|Psi|_{q,sigma} / (diam^{(d-1)/q - (d-1)/r + omega - sigma} |Psi|_{r,omega})`.
pub fn embedding_check(psi: &GradientArray, wn: &WhitneyNorm, q: &NormParams, r: &NormParams, diam: f64) -> Result<EmbeddingReport> {
    let (line, window) = embedding_conditions(q, r)?;
    let inv = |p: f64| if p.is_infinite() { 0.0 } else { (D - 1.0) / p };
    let e = inv(q.p) - inv(r.p) + r.s - q.s;
    let avg = wn.cube_averages(psi)?;
    let top = wn.norm_from_averages(&avg, q);
    let bottom = wn.norm_from_averages(&avg, r) * diam.powf(e);
    let ratio = if bottom == 0.0 && top == 0.0 { None } else { Some(top / bottom) };
    Ok(EmbeddingReport { ratio, on_scaling_line: line, in_bounded_window: window, diam_exponent: e })
}

/// Intermediate exponents `1/p = (1-t)/p0 + t/p1`, `s = (1-t) s0 + t s1`.
pub fn interpolated_params(a: &NormParams, b: &NormParams, t: f64) -> NormParams {
    let p = 1.0 / ((1.0 - t) / a.p + t / b.p);
    NormParams::raw(p, (1.0 - t) * a.s + t * b.s)
}

/// `|H|_{p_t,s_t} / (|H|_{p0,s0}^{1-t} |H|_{p1,s1}^t)`; `None` when `H` vanishes.
pub fn sequence_holder_check(h: &GradientArray, wn: &WhitneyNorm, a: &NormParams, b: &NormParams, t: f64) -> Result<Option<f64>> {
    if !(t > 0.0 && t < 1.0) {
        return Err(LabError::InvalidParameter(format!("interpolation parameter {t} outside (0, 1)")));
    }
    if a.p < 1.0 || b.p < 1.0 || a.is_infinite() || b.is_infinite() {
        return Err(LabError::InvalidParameter("sequence interpolation needs 1 <= p0, p1 < inf".into()));
    }
    let avg = wn.cube_averages(h)?;
    let mid = wn.norm_from_averages(&avg, &interpolated_params(a, b, t));
    let n0 = wn.norm_from_averages(&avg, a);
    let n1 = wn.norm_from_averages(&avg, b);
    if n0 == 0.0 || n1 == 0.0 {
        return Ok(None);
    }
    Ok(Some(mid / (n0.powf(1.0 - t) * n1.powf(t))))
}

/// Unit-variance complex Gaussian.
pub fn complex_gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Generator for trial `t` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

/// Independent Gaussian values per cube and slot, zero off the cubes.
pub fn cube_gaussian_field(wn: &WhitneyNorm, width: usize, rng: &mut impl Rng) -> GradientArray {
    let mut v = vec![ZERO; wn.samples.len() * width];
    for q in 0..wn.grid.len() {
        let vals: Vec<C64> = (0..width).map(|_| complex_gaussian(rng)).collect();
        for &i in &wn.members[q] {
            v[i * width..(i + 1) * width].copy_from_slice(&vals);
        }
    }
    GradientArray::from_values(wn.samples.clone(), width, v).unwrap()
}

/// A random constant array on a single cube.
pub fn single_cube_field(wn: &WhitneyNorm, q: usize, width: usize, rng: &mut impl Rng) -> GradientArray {
    let mut v = vec![ZERO; wn.samples.len() * width];
    let vals: Vec<C64> = (0..width).map(|_| complex_gaussian(rng)).collect();
    for &i in &wn.members[q] {
        v[i * width..(i + 1) * width].copy_from_slice(&vals);
    }
    GradientArray::from_values(wn.samples.clone(), width, v).unwrap()
}

/// Gaussian values on a `k x k` partition of the bounding box of the samples.
pub fn piecewise_field(samples: &Arc<Samples>, k: usize, width: usize, rng: &mut impl Rng) -> GradientArray {
    let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in &samples.points {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let vals: Vec<C64> = (0..k * k * width).map(|_| complex_gaussian(rng)).collect();
    let cell = |t: f64, a: f64, b: f64| (((t - a) / (b - a + 1e-300) * k as f64) as usize).min(k - 1);
    let mut v = Vec::with_capacity(samples.len() * width);
    for p in &samples.points {
        let c = cell(p.y, lo.y, hi.y) * k + cell(p.x, lo.x, hi.x);
        v.extend_from_slice(&vals[c * width..(c + 1) * width]);
    }
    GradientArray::from_values(samples.clone(), width, v).unwrap()
}

/// Random trigonometric field with frequencies up to `modes` in each direction.
pub fn smooth_field(samples: &Arc<Samples>, modes: usize, width: usize, rng: &mut impl Rng) -> GradientArray {
    let mut coeffs = Vec::new();
    for kx in 0..=modes {
        for ky in 0..=modes {
            let damp = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
            let c: Vec<C64> = (0..width).map(|_| complex_gaussian(rng) * damp).collect();
            let phase = (rng.random::<f64>(), rng.random::<f64>());
            coeffs.push((kx as f64, ky as f64, phase, c));
        }
    }
    let tau = std::f64::consts::TAU;
    let mut v = vec![ZERO; samples.len() * width];
    for (i, p) in samples.points.iter().enumerate() {
        for (kx, ky, (px, py), c) in &coeffs {
            let b = (tau * (kx * p.x / 2.0 + px)).cos() * (tau * (ky * p.y / 2.0 + py)).cos();
            for k in 0..width {
                v[i * width + k] += c[k] * b;
            }
        }
    }
    GradientArray::from_values(samples.clone(), width, v).unwrap()
}

/// `min(1, 4 dist(x))`, damping fields near the boundary.
pub fn boundary_ramp(domain: &PolygonalDomain, x: Point2) -> f64 {
    (4.0 * domain.distance_to_boundary(x)).min(1.0)
}

/// Multiplies a field pointwise by a scalar weight of position.
pub fn weighted(h: &GradientArray, w: impl Fn(Point2) -> f64) -> GradientArray {
    let width = h.width();
    let samples = h.samples();
    let mut v = h.values().to_vec();
    for (i, p) in samples.points.iter().enumerate() {
        let c = w(*p);
        v[i * width..(i + 1) * width].iter_mut().for_each(|x| *x *= c);
    }
    GradientArray::from_values(samples.clone(), width, v).unwrap()
}

/// Result of [`operator_norm_probe`]; `c0_hat` is a lower bound.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub c0_hat: f64,
    pub trials: usize,
    pub best: Option<GradientArray>,
    pub best_family: &'static str,
}

/// Maximizes `|T H| / |H|` over random probes: Gaussian cube fields, single
/// cubes, piecewise and smooth global fields, the `extra` fields, and a few
/// power steps `H <- T H` from the best probe.
pub fn operator_norm_probe<F>(
    solve: F,
    wn: &WhitneyNorm,
    params: &NormParams,
    width: usize,
    trials: usize,
    seed: u64,
    extra: &[GradientArray],
) -> Result<ProbeReport>
where
    F: Fn(&GradientArray) -> Result<GradientArray> + Sync + Send,
{
    if trials == 0 {
        return Err(LabError::InvalidParameter("at least one probe trial is needed".into()));
    }
    let make = |t: usize| -> (GradientArray, &'static str) {
        let mut rng = trial_rng(seed, t as u64);
        match t % 4 {
            0 => (cube_gaussian_field(wn, width, &mut rng), "cube"),
            1 => {
                let q = rng.random_range(0..wn.grid.len());
                (single_cube_field(wn, q, width, &mut rng), "single-cube")
            }
            2 => (piecewise_field(&wn.samples, 8, width, &mut rng), "piecewise"),
            _ => (smooth_field(&wn.samples, 4, width, &mut rng), "smooth"),
        }
    };
    let ratio = |h: &GradientArray| -> Result<(f64, GradientArray)> {
        let base = wn.value(h, params)?;
        let image = solve(h)?;
        if base == 0.0 {
            return Ok((0.0, image));
        }
        Ok((wn.value(&image, params)? / base, image))
    };
    let results = ordered_map(trials + extra.len(), |t| -> Result<(f64, GradientArray, &'static str)> {
        let (h, fam) = if t < trials { make(t) } else { (extra[t - trials].clone(), "extra") };
        let (r, _) = ratio(&h)?;
        Ok((r, h, fam))
    });
    let mut best: Option<(f64, GradientArray, &'static str)> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    let (mut c0, mut field, mut fam) = best.unwrap();
    let mut current = field.clone();
    for _ in 0..3 {
        let (r, image) = ratio(&current)?;
        if r > c0 {
            c0 = r;
            field = current.clone();
            fam = "power";
        }
        if wn.value(&image, params)? == 0.0 {
            break;
        }
        current = image;
    }
    Ok(ProbeReport { c0_hat: c0, trials: trials + extra.len(), best: Some(field), best_family: fam })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovOptions {
    pub panels_per_edge: usize,
    pub levels: u32,
}

impl Default for BesovOptions {
    fn default() -> Self {
        Self { panels_per_edge: 16, levels: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovValue {
    pub value: f64,
    /// Value with one more grading level.
    pub refined: f64,
    pub relative_change: f64,
    pub converged: bool,
}

#[derive(Clone, Copy)]
struct Piece {
    a: Point2,
    b: Point2,
}

impl Piece {
    fn len(&self) -> f64 {
        self.a.dist(self.b)
    }
    fn halves(&self) -> [Piece; 2] {
        let m = self.a.lerp(self.b, 0.5);
        [Piece { a: self.a, b: m }, Piece { a: m, b: self.b }]
    }
    fn same(&self, o: &Piece) -> bool {
        self.a.dist(o.a) < 1e-14 && self.b.dist(o.b) < 1e-14
    }
    fn touches(&self, o: &Piece) -> bool {
        let tol = 1e-12 * (self.len() + o.len());
        [self.a, self.b].iter().any(|p| p.dist(o.a) < tol || p.dist(o.b) < tol)
    }
}

/// `(int int |f(x)-f(y)|^p / |x-y|^{d-1+ps} dsigma dsigma)^{1/p}` over the
/// boundary by panel pairs; touching pairs are split toward the shared point
/// for `levels` steps and the innermost touching pieces are dropped.
pub fn besov_boundary_seminorm(
    domain: &PolygonalDomain,
    width: usize,
    f: impl Fn(Point2, &mut [C64]) + Sync + Send,
    params: &NormParams,
    opts: BesovOptions,
) -> Result<BesovValue> {
    let p = params.p;
    if !(1.0..f64::INFINITY).contains(&p) {
        return Err(LabError::InvalidParameter(format!("boundary seminorm needs 1 <= p < inf, got {p}")));
    }
    if opts.panels_per_edge == 0 {
        return Err(LabError::InvalidParameter("no boundary panels".into()));
    }
    let mut panels = Vec::new();
    for (a, b) in domain.edges() {
        for k in 0..opts.panels_per_edge {
            let t0 = k as f64 / opts.panels_per_edge as f64;
            let t1 = (k + 1) as f64 / opts.panels_per_edge as f64;
            panels.push(Piece { a: a.lerp(b, t0), b: a.lerp(b, t1) });
        }
    }
    let (gx, gw) = gauss_legendre(6);
    let expo = D - 1.0 + p * params.s;
    let eval = |x: Point2| {
        let mut v = vec![ZERO; width];
        f(x, &mut v);
        v
    };
    let nodes = |pc: &Piece| -> Vec<(Point2, f64, Vec<C64>)> {
        let l = pc.len();
        gx.iter().zip(&gw).map(|(&t, &w)| {
            let x = pc.a.lerp(pc.b, t);
            (x, w * l, eval(x))
        }).collect()
    };
    let far = |u: &[(Point2, f64, Vec<C64>)], v: &[(Point2, f64, Vec<C64>)]| -> f64 {
        let mut terms = Vec::with_capacity(36);
        for (x, wx, fx) in u {
            for (y, wy, fy) in v {
                let diff: f64 = fx.iter().zip(fy).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                terms.push(wx * wy * diff.powf(p) / x.dist(*y).powf(expo));
            }
        }
        pairwise_sum(&terms)
    };
    fn near(
        a: Piece,
        b: Piece,
        level: u32,
        max: u32,
        nodes: &dyn Fn(&Piece) -> Vec<(Point2, f64, Vec<C64>)>,
        far: &dyn Fn(&[(Point2, f64, Vec<C64>)], &[(Point2, f64, Vec<C64>)]) -> f64,
    ) -> f64 {
        if level >= max {
            return 0.0;
        }
        let (ha, hb) = (a.halves(), b.halves());
        if a.same(&b) {
            let n0 = nodes(&ha[0]);
            let n1 = nodes(&ha[1]);
            let cross = if ha[0].touches(&ha[1]) { near(ha[0], ha[1], level + 1, max, nodes, far) } else { far(&n0, &n1) };
            return near(ha[0], ha[0], level + 1, max, nodes, far) + near(ha[1], ha[1], level + 1, max, nodes, far) + 2.0 * cross;
        }
        let mut total = 0.0;
        for x in ha {
            for y in hb {
                total += if x.touches(&y) { near(x, y, level + 1, max, nodes, far) } else { far(&nodes(&x), &nodes(&y)) };
            }
        }
        total
    }
    let compute = |levels: u32| -> f64 {
        let pre: Vec<_> = panels.iter().map(nodes).collect();
        let rows = ordered_map(panels.len(), |i| {
            let mut t = Vec::with_capacity(panels.len());
            for j in 0..panels.len() {
                let (a, b) = (panels[i], panels[j]);
                t.push(if i == j || a.touches(&b) { near(a, b, 0, levels, &nodes, &far) } else { far(&pre[i], &pre[j]) });
            }
            pairwise_sum(&t)
        });
        pairwise_sum(&rows).max(0.0).powf(1.0 / p)
    };
    let value = compute(opts.levels);
    let refined = compute(opts.levels + 1);
    let relative_change = if refined == 0.0 { 0.0 } else { (refined - value).abs() / refined };
    Ok(BesovValue { value, refined, relative_change, converged: relative_change < 0.02 })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mesh;

    fn setup(depth: u32) -> WhitneyNorm {
        let dom = PolygonalDomain::unit_square();
        let mesh = Arc::new(Mesh::rect_grid(&dom, 1.0 / 16.0).unwrap());
        let samples = Arc::new(Samples::refined(mesh, 2));
        WhitneyNorm::new(WhitneyGrid::build(&dom, depth).unwrap(), samples).unwrap()
    }

    #[test]
    fn dual_exponents() {
        let a = NormParams::new(4.0 / 3.0, 0.4).unwrap();
        assert!((a.p_prime() - 4.0).abs() < 1e-12);
        assert!((a.s_prime() - 0.6).abs() < 1e-12);
        let b = NormParams::new(0.8, 0.5).unwrap();
        assert!(b.p_prime().is_infinite());
        assert!((b.s_prime() - 0.75).abs() < 1e-12);
        assert!(NormParams::new(0.6, 0.5).is_err());
        assert!(NormParams::new(2.0, 1.0).is_err());
    }

    #[test]
    fn single_cube_closed_form() {
        let wn = setup(3);
        let q = 0;
        let cube = wn.grid().cubes()[q];
        let mut v = vec![ZERO; wn.samples().len()];
        for &i in wn.members(q) {
            v[i] = C64::new(3.0, 4.0);
        }
        let h = GradientArray::from_values(wn.samples().clone(), 1, v).unwrap();
        let p1 = NormParams::new(1.0, 0.3).unwrap();
        let got = wn.value(&h, &p1).unwrap();
        assert!((got - 5.0 * cube.side.powf(2.0 - 0.3)).abs() < 1e-12 * got);
    }

    #[test]
    fn l2_identity_at_two_half() {
        let wn = setup(4);
        let mut rng = trial_rng(5, 0);
        let h = cube_gaussian_field(&wn, 3, &mut rng);
        let n = wn.value(&h, &NormParams::new(2.0, 0.5).unwrap()).unwrap();
        assert!((n - h.l2_norm()).abs() < 1e-12 * n);
    }

    #[test]
    fn duality_map_identities() {
        let wn = setup(4);
        let params = NormParams::new(3.0, 0.3).unwrap();
        let f = smooth_field(wn.samples(), 3, 2, &mut trial_rng(1, 2));
        let j = wn.duality_map(&f, &params).unwrap();
        let nf = wn.value(&f, &params).unwrap();
        let pair = wn.pairing_covered(&j, &f).unwrap();
        assert!((pair.re - nf.powf(3.0)).abs() < 1e-10 * nf.powf(3.0));
        let nj = wn.value(&j, &params.dual()).unwrap();
        assert!((nj - nf * nf).abs() < 1e-10 * nj);
    }

    #[test]
    fn probe_of_zero_map_is_zero() {
        let wn = setup(3);
        let p = NormParams::new(2.0, 0.5).unwrap();
        let r = operator_norm_probe(|h| Ok(h.scaled(ZERO)), &wn, &p, 1, 8, 1, &[]).unwrap();
        assert_eq!(r.c0_hat, 0.0);
        let r = operator_norm_probe(|h| Ok(h.scaled(C64::new(0.0, 2.0))), &wn, &p, 1, 8, 1, &[]).unwrap();
        assert!((r.c0_hat - 2.0).abs() < 1e-12);
    }

    #[test]
    fn besov_of_constant_vanishes_and_scales() {
        let dom = PolygonalDomain::unit_square();
        let p = NormParams::new(2.0, 0.5).unwrap();
        let opts = BesovOptions { panels_per_edge: 4, levels: 2 };
        let c = besov_boundary_seminorm(&dom, 1, |_, o| o[0] = C64::new(2.0, 1.0), &p, opts).unwrap();
        assert_eq!(c.value, 0.0);
        let a = besov_boundary_seminorm(&dom, 1, |x, o| o[0] = C64::from(x.x), &p, opts).unwrap();
        let b = besov_boundary_seminorm(&dom, 1, |x, o| o[0] = C64::from(3.0 * x.x), &p, opts).unwrap();
        assert!((b.value - 3.0 * a.value).abs() < 1e-12 * b.value);
        assert!(besov_boundary_seminorm(&dom, 1, |_, _| {}, &NormParams::new(0.9, 0.5).unwrap(), opts).is_err());
    }

    #[test]
    fn slope_fit() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 3.0, 5.0];
        assert!((fit_slope(&x, &y) - 2.0).abs() < 1e-14);
    }
}
