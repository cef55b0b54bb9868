//! Sample sets and array-valued fields sampled on them.

use std::sync::Arc;

use num_complex::Complex64;

use crate::coefficients::{apply_matrix, CoefficientTensor};
use crate::error::{LabError, Result};
use crate::geometry::{gauss_legendre, CellKind, Mesh, Point2};
use crate::sum::{ordered_map, pairwise_sum, pairwise_sum_complex};

type C64 = Complex64;

/// Weighted points on a mesh with the cell and reference coordinates of each.
#[derive(Debug, Clone)]
pub struct Samples {
    mesh: Arc<Mesh>,
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
    pub cells: Vec<usize>,
    pub refs: Vec<(f64, f64)>,
    /// Samples of cell `c` are `cell_start[c]..cell_start[c + 1]` when grouped by cell.
    cell_start: Option<Vec<usize>>,
}

const TRI3: [(f64, f64); 3] = [(1.0 / 6.0, 1.0 / 6.0), (2.0 / 3.0, 1.0 / 6.0), (1.0 / 6.0, 2.0 / 3.0)];

impl Samples {
    fn from_reference_rule(mesh: Arc<Mesh>, rule: &[(f64, f64, f64)]) -> Self {
        let nc = mesh.n_cells();
        let mut s = Samples {
            points: Vec::with_capacity(nc * rule.len()),
            weights: Vec::with_capacity(nc * rule.len()),
            cells: Vec::with_capacity(nc * rule.len()),
            refs: Vec::with_capacity(nc * rule.len()),
            cell_start: Some((0..=nc).map(|c| c * rule.len()).collect()),
            mesh,
        };
        for c in 0..nc {
            let area = s.mesh.cell_area(c);
            for &(xi, eta, w) in rule {
                s.points.push(s.mesh.map_point(c, xi, eta));
                s.weights.push(w * area);
                s.cells.push(c);
                s.refs.push((xi, eta));
            }
        }
        s
    }

    /// Quadrature used for assembly: a 3-point degree-2 rule on triangles and
    /// a 4x4 Gauss rule on rectangles.
    pub fn assembly(mesh: Arc<Mesh>) -> Self {
        let rule: Vec<(f64, f64, f64)> = match mesh.kind() {
            CellKind::Triangle => TRI3.iter().map(|&(a, b)| (a, b, 1.0 / 3.0)).collect(),
            CellKind::Rectangle => tensor_rule(4, 1),
        };
        Self::from_reference_rule(mesh, &rule)
    }

    /// Finer samples for norms: every cell split `2^r` times per direction.
    pub fn refined(mesh: Arc<Mesh>, r: u32) -> Self {
        let k = 1usize << r;
        let rule: Vec<(f64, f64, f64)> = match mesh.kind() {
            CellKind::Triangle => {
                let mut rule = Vec::new();
                let h = 1.0 / k as f64;
                let w = 1.0 / (3 * k * k) as f64;
                for j in 0..k {
                    for i in 0..(k - j) {
                        let (x0, y0) = (i as f64 * h, j as f64 * h);
                        for &(a, b) in &TRI3 {
                            rule.push((x0 + a * h, y0 + b * h, w));
                        }
                        if i + j + 1 < k {
                            // downward triangle with corners (i+1, j), (i+1, j+1), (i, j+1)
                            for &(a, b) in &TRI3 {
                                rule.push((x0 + h - b * h, y0 + (a + b) * h, w));
                            }
                        }
                    }
                }
                rule
            }
            CellKind::Rectangle => tensor_rule(2, k),
        };
        Self::from_reference_rule(mesh, &rule)
    }

    /// Arbitrary points with given weights; points outside the mesh are dropped.
    /// Returns the samples and, for each kept sample, its input index.
    pub fn at_points(mesh: Arc<Mesh>, points: &[Point2], weights: &[f64]) -> (Self, Vec<usize>) {
        let mut s = Samples {
            points: Vec::new(),
            weights: Vec::new(),
            cells: Vec::new(),
            refs: Vec::new(),
            cell_start: None,
            mesh: mesh.clone(),
        };
        let mut kept = Vec::new();
        for (i, (&p, &w)) in points.iter().zip(weights).enumerate() {
            if let Some((c, xi, eta)) = mesh.locate(p) {
                s.points.push(p);
                s.weights.push(w);
                s.cells.push(c);
                s.refs.push((xi, eta));
                kept.push(i);
            }
        }
        (s, kept)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_range(&self, c: usize) -> Option<std::ops::Range<usize>> {
        self.cell_start.as_ref().map(|s| s[c]..s[c + 1])
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    pub fn integrate(&self, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
        pairwise_sum(&ordered_map(self.len(), |i| self.weights[i] * f(i)))
    }
}

/// Gauss product rule with `n x n` points on each of `k x k` sub-squares of `[0,1]^2`.
fn tensor_rule(n: usize, k: usize) -> Vec<(f64, f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let h = 1.0 / k as f64;
    let mut rule = Vec::with_capacity(n * n * k * k);
    for bj in 0..k {
        for bi in 0..k {
            for (yj, wj) in x.iter().zip(&w) {
                for (xi, wi) in x.iter().zip(&w) {
                    rule.push(((bi as f64 + xi) * h, (bj as f64 + yj) * h, wi * wj * h * h));
                }
            }
        }
    }
    rule
}

/// Complex arrays of a fixed width at every point of a sample set.
#[derive(Debug, Clone)]
pub struct GradientArray {
    samples: Arc<Samples>,
    width: usize,
    values: Vec<C64>,
}

impl GradientArray {
    pub fn zeros(samples: Arc<Samples>, width: usize) -> Self {
        let n = samples.len();
        Self { samples, width, values: vec![C64::new(0.0, 0.0); n * width] }
    }

    pub fn from_values(samples: Arc<Samples>, width: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != samples.len() * width {
            return Err(LabError::ShapeMismatch {
                expected: format!("{} values", samples.len() * width),
                found: format!("{}", values.len()),
            });
        }
        Ok(Self { samples, width, values })
    }

    pub fn samples(&self) -> &Arc<Samples> {
        &self.samples
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn at(&self, i: usize) -> &[C64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    /// `|H(x_i)|^2` at every sample.
    pub fn pointwise_sq(&self) -> Vec<f64> {
        (0..self.samples.len())
            .map(|i| self.at(i).iter().map(|v| v.norm_sqr()).sum())
            .collect()
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    fn check_same(&self, other: &GradientArray) -> Result<()> {
        if !Arc::ptr_eq(&self.samples, &other.samples) || self.width != other.width {
            return Err(LabError::ShapeMismatch {
                expected: format!("width {} on the same samples", self.width),
                found: format!("width {}", other.width),
            });
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: C64, other: &GradientArray, b: C64) -> Result<Self> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { samples: self.samples.clone(), width: self.width, values })
    }

    /// `A(x) H(x)` at every sample.
    pub fn apply_tensor(&self, a: &CoefficientTensor) -> Result<Self> {
        if a.width() != self.width {
            return Err(LabError::ShapeMismatch {
                expected: format!("tensor width {}", self.width),
                found: format!("{}", a.width()),
            });
        }
        let w = self.width;
        let chunks = ordered_map(self.samples.len(), |i| {
            let mat = a.matrix_at(self.samples.points[i]);
            let mut out = vec![C64::new(0.0, 0.0); w];
            apply_matrix(&mat, self.at(i), &mut out);
            out
        });
        Ok(Self { samples: self.samples.clone(), width: w, values: chunks.concat() })
    }

    /// `sum_gamma int conj(F_gamma) G_gamma` by the sample weights.
    pub fn pairing(&self, other: &GradientArray) -> Result<C64> {
        self.check_same(other)?;
        let terms = ordered_map(self.samples.len(), |i| {
            let s: C64 = self.at(i).iter().zip(other.at(i)).map(|(f, g)| f.conj() * g).sum();
            s * self.samples.weights[i]
        });
        Ok(pairwise_sum_complex(&terms))
    }

    pub fn l2_norm(&self) -> f64 {
        let sq = self.pointwise_sq();
        self.samples.integrate(|i| sq[i]).sqrt()
    }
}

/// Array-valued function of position.
pub trait ArrayField: Send + Sync {
    fn width(&self) -> usize;

    fn eval(&self, x: Point2, out: &mut [C64]);

    fn sample(&self, samples: &Arc<Samples>) -> GradientArray {
        let w = self.width();
        let rows = ordered_map(samples.len(), |i| {
            let mut out = vec![C64::new(0.0, 0.0); w];
            self.eval(samples.points[i], &mut out);
            out
        });
        GradientArray { samples: samples.clone(), width: w, values: rows.concat() }
    }
}

/// Wraps a closure as a field.
pub struct FnField<F> {
    width: usize,
    f: F,
}

impl<F: Fn(Point2, &mut [C64]) + Send + Sync> FnField<F> {
    pub fn new(width: usize, f: F) -> Self {
        Self { width, f }
    }
}

impl<F: Fn(Point2, &mut [C64]) + Send + Sync> ArrayField for FnField<F> {
    fn width(&self) -> usize {
        self.width
    }

    fn eval(&self, x: Point2, out: &mut [C64]) {
        (self.f)(x, out)
    }
}

/// The zero field of a given width.
pub struct ZeroField(pub usize);

impl ArrayField for ZeroField {
    fn width(&self) -> usize {
        self.0
    }

    fn eval(&self, _x: Point2, out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    }
}

/// `A(x) F(x)`.
pub struct TensorField<'a> {
    pub tensor: &'a CoefficientTensor,
    pub inner: &'a dyn ArrayField,
}

impl ArrayField for TensorField<'_> {
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn eval(&self, x: Point2, out: &mut [C64]) {
        let mut tmp = vec![C64::new(0.0, 0.0); self.inner.width()];
        self.inner.eval(x, &mut tmp);
        self.tensor.apply(x, &tmp, out);
    }

    fn sample(&self, samples: &Arc<Samples>) -> GradientArray {
        self.inner
            .sample(samples)
            .apply_tensor(self.tensor)
            .expect("tensor width checked at construction")
    }
}

/// Linear combination `sum c_i F_i`.
pub struct SumField<'a> {
    pub terms: Vec<(C64, &'a dyn ArrayField)>,
}

impl ArrayField for SumField<'_> {
    fn width(&self) -> usize {
        self.terms[0].1.width()
    }

    fn eval(&self, x: Point2, out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        let mut tmp = vec![C64::new(0.0, 0.0); out.len()];
        for (c, f) in &self.terms {
            f.eval(x, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += c * t);
        }
    }

    fn sample(&self, samples: &Arc<Samples>) -> GradientArray {
        let mut acc = GradientArray::zeros(samples.clone(), self.width());
        for (c, f) in &self.terms {
            let s = f.sample(samples);
            acc = acc.combine(C64::new(1.0, 0.0), &s, *c).expect("same samples");
        }
        acc
    }
}

/// Pointwise scalar multiple `w(x) F(x)`.
pub struct WeightedField<'a, W> {
    pub weight: W,
    pub inner: &'a dyn ArrayField,
}

impl<W: Fn(Point2) -> f64 + Send + Sync> ArrayField for WeightedField<'_, W> {
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn eval(&self, x: Point2, out: &mut [C64]) {
        self.inner.eval(x, out);
        let w = (self.weight)(x);
        out.iter_mut().for_each(|v| *v *= w);
    }

    fn sample(&self, samples: &Arc<Samples>) -> GradientArray {
        let mut g = self.inner.sample(samples);
        let w = g.width;
        for i in 0..samples.len() {
            let f = (self.weight)(samples.points[i]);
            g.values[i * w..(i + 1) * w].iter_mut().for_each(|v| *v *= f);
        }
        g
    }
}
