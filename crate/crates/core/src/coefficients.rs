//! Coefficient tensors `A^{jk}_{ab}` of divergence-form operators of order `2m`.
//!
//! A tensor evaluated at a point is a square complex matrix acting on arrays
//! indexed by `(component k, multiindex b)`, stored row-major with flat index
//! `k * n_multi + b`. Arrays of `m`-th derivatives are stored with the weight
//! `sqrt(m! / b!)` on slot `b`, so the Euclidean product of two such arrays is
//! the full tensor contraction of the derivative tensors (for `m = 2` the
//! Frobenius product of Hessians).

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::geometry::{BBox, Point2, DIM};

type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `sqrt(|a|! / a!)`, the slot weight used by gradient arrays.
    pub fn weight(&self) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        (fact(self.order()) / self.0.iter().map(|&a| fact(a)).product::<f64>()).sqrt()
    }

    pub fn is_pure(&self) -> bool {
        self.0.iter().filter(|&&a| a > 0).count() == 1
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "{}", parts.join(":"))
    }
}

/// All multiindices of length `m` in `d` variables, first exponent descending.
pub fn multiindices(d: usize, m: usize) -> Vec<MultiIndex> {
    fn rec(d: usize, m: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if d == 1 {
            prefix.push(m);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for a in (0..=m).rev() {
            prefix.push(a);
            rec(d - 1, m - a, prefix, out);
            prefix.pop();
        }
    }
    assert!(d >= 1);
    let mut out = Vec::new();
    rec(d, m as u32, &mut Vec::new(), &mut out);
    out
}

/// Uniform `nx x ny` partition of a box; cell `(i, j)` has index `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    pub bbox: BBox,
    pub nx: usize,
    pub ny: usize,
}

impl CellPartition {
    pub fn new(bbox: BBox, nx: usize, ny: usize) -> Self {
        assert!(nx > 0 && ny > 0);
        Self { bbox, nx, ny }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_of(&self, x: Point2) -> usize {
        let fx = (x.x - self.bbox.min.x) / self.bbox.width() * self.nx as f64;
        let fy = (x.y - self.bbox.min.y) / self.bbox.height() * self.ny as f64;
        let i = (fx.max(0.0) as usize).min(self.nx - 1);
        let j = (fy.max(0.0) as usize).min(self.ny - 1);
        j * self.nx + i
    }

    pub fn cell_center(&self, c: usize) -> Point2 {
        let (i, j) = (c % self.nx, c / self.nx);
        Point2::new(
            self.bbox.min.x + (i as f64 + 0.5) * self.bbox.width() / self.nx as f64,
            self.bbox.min.y + (j as f64 + 0.5) * self.bbox.height() / self.ny as f64,
        )
    }
}

pub type TensorFn = Arc<dyn Fn(Point2, &mut [C64]) + Send + Sync>;

#[derive(Clone)]
pub enum TensorKind {
    Constant(Vec<C64>),
    PiecewiseConstant { partition: CellPartition, blocks: Vec<Vec<C64>> },
    Callable(TensorFn),
    Combination(Vec<(C64, CoefficientTensor)>),
}

impl std::fmt::Debug for TensorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TensorKind::Constant(_) => write!(f, "Constant"),
            TensorKind::PiecewiseConstant { partition, .. } => {
                write!(f, "PiecewiseConstant({}x{})", partition.nx, partition.ny)
            }
            TensorKind::Callable(_) => write!(f, "Callable"),
            TensorKind::Combination(t) => write!(f, "Combination({} terms)", t.len()),
        }
    }
}

/// Coefficients of an operator of order `2m` acting on `C^N`-valued functions.
#[derive(Debug, Clone)]
pub struct CoefficientTensor {
    m: usize,
    n: usize,
    kind: TensorKind,
}

impl CoefficientTensor {
    pub fn width_for(m: usize, n: usize) -> usize {
        n * multiindices(DIM, m).len()
    }

    fn check_len(m: usize, n: usize, len: usize) -> Result<()> {
        let w = Self::width_for(m, n);
        if len != w * w {
            return Err(LabError::ShapeMismatch {
                expected: format!("{w}x{w} entries"),
                found: format!("{len}"),
            });
        }
        Ok(())
    }

    pub fn constant(m: usize, n: usize, entries: Vec<C64>) -> Result<Self> {
        Self::check_len(m, n, entries.len())?;
        Ok(Self { m, n, kind: TensorKind::Constant(entries) })
    }

    pub fn constant_real(m: usize, n: usize, entries: &[f64]) -> Result<Self> {
        Self::constant(m, n, entries.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn piecewise(m: usize, n: usize, partition: CellPartition, blocks: Vec<Vec<C64>>) -> Result<Self> {
        if blocks.len() != partition.n_cells() {
            return Err(LabError::ShapeMismatch {
                expected: format!("{} blocks", partition.n_cells()),
                found: format!("{}", blocks.len()),
            });
        }
        for b in &blocks {
            Self::check_len(m, n, b.len())?;
        }
        Ok(Self { m, n, kind: TensorKind::PiecewiseConstant { partition, blocks } })
    }

    pub fn callable(m: usize, n: usize, f: TensorFn) -> Self {
        Self { m, n, kind: TensorKind::Callable(f) }
    }

    /// `delta_jk delta_ab`: the Gram form of `m`-th gradients.
    pub fn identity(m: usize, n: usize) -> Self {
        let w = Self::width_for(m, n);
        let mut e = vec![C64::new(0.0, 0.0); w * w];
        for i in 0..w {
            e[i * w + i] = C64::new(1.0, 0.0);
        }
        Self::constant(m, n, e).unwrap()
    }

    pub fn laplacian() -> Self {
        Self::identity(1, 1)
    }

    /// The symmetric constant biharmonic family
    /// `<D2 psi, A D2 phi> = rho conj(lap psi) lap phi + (1 - rho) sum conj(psi_jk) phi_jk`.
    pub fn biharmonic_rho(rho: f64, d: usize) -> Result<Self> {
        if d != DIM {
            return Err(LabError::InvalidParameter(format!("only d = {DIM} is supported, got {d}")));
        }
        let mi = multiindices(d, 2);
        let w = mi.len();
        let mut e = vec![C64::new(0.0, 0.0); w * w];
        for (a, ma) in mi.iter().enumerate() {
            for (b, mb) in mi.iter().enumerate() {
                let mut v = 0.0;
                if ma.is_pure() && mb.is_pure() {
                    v += rho;
                }
                if a == b {
                    v += 1.0 - rho;
                }
                e[a * w + b] = C64::new(v, 0.0);
            }
        }
        Self::constant(2, 1, e)
    }

    /// Whether `rho` lies in the window `-1/(d-1) < rho < 1` required for Neumann runs.
    pub fn rho_in_neumann_window(rho: f64, d: usize) -> bool {
        rho > -1.0 / (d as f64 - 1.0) && rho < 1.0
    }

    /// Real diagonal `m = 1` coefficients depending only on `x_1`, piecewise
    /// constant on equal bands of `[x_min, x_max]`.
    pub fn diag_real_tindep(x_min: f64, x_max: f64, diag: &[[f64; 2]]) -> Result<Self> {
        if diag.is_empty() || !(x_max > x_min) {
            return Err(LabError::InvalidParameter("empty band table".into()));
        }
        let bbox = BBox { min: Point2::new(x_min, 0.0), max: Point2::new(x_max, 1.0) };
        let partition = CellPartition::new(bbox, diag.len(), 1);
        let blocks = diag
            .iter()
            .map(|&[a, b]| {
                vec![C64::new(a, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(b, 0.0)]
            })
            .collect();
        Self::piecewise(1, 1, partition, blocks)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &TensorKind {
        &self.kind
    }

    /// Number of array slots `N * #{|b| = m}`.
    pub fn width(&self) -> usize {
        Self::width_for(self.m, self.n)
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            TensorKind::Constant(_) => true,
            TensorKind::Combination(t) => t.iter().all(|(_, a)| a.is_constant()),
            _ => false,
        }
    }

    /// Writes the coefficient matrix at `x` into `out` (row-major, `width^2`).
    pub fn eval(&self, x: Point2, out: &mut [C64]) {
        match &self.kind {
            TensorKind::Constant(e) => out.copy_from_slice(e),
            TensorKind::PiecewiseConstant { partition, blocks } => {
                out.copy_from_slice(&blocks[partition.cell_of(x)])
            }
            TensorKind::Callable(f) => f(x, out),
            TensorKind::Combination(terms) => {
                out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                let mut tmp = vec![C64::new(0.0, 0.0); out.len()];
                for (c, t) in terms {
                    t.eval(x, &mut tmp);
                    for (o, v) in out.iter_mut().zip(&tmp) {
                        *o += c * v;
                    }
                }
            }
        }
    }

    pub fn matrix_at(&self, x: Point2) -> Vec<C64> {
        let w = self.width();
        let mut out = vec![C64::new(0.0, 0.0); w * w];
        self.eval(x, &mut out);
        out
    }

    /// Entry `A^{jk}_{ab}(x)` with 0-based `j, k` and multiindex positions `a, b`.
    pub fn entry(&self, x: Point2, j: usize, k: usize, a: usize, b: usize) -> C64 {
        let nm = self.width() / self.n;
        let w = self.width();
        self.matrix_at(x)[(j * nm + a) * w + (k * nm + b)]
    }

    /// `(A H)(x)` for a single array.
    pub fn apply(&self, x: Point2, h: &[C64], out: &mut [C64]) {
        let mat = self.matrix_at(x);
        apply_matrix(&mat, h, out);
    }

    /// `(A*)^{jk}_{ab} = conj(A^{kj}_{ba})`, the conjugate transpose at every point.
    pub fn adjoint(&self) -> Self {
        let w = self.width();
        let kind = match &self.kind {
            TensorKind::Constant(e) => TensorKind::Constant(conj_transpose(e, w)),
            TensorKind::PiecewiseConstant { partition, blocks } => TensorKind::PiecewiseConstant {
                partition: partition.clone(),
                blocks: blocks.iter().map(|b| conj_transpose(b, w)).collect(),
            },
            TensorKind::Callable(f) => {
                let f = f.clone();
                TensorKind::Callable(Arc::new(move |x, out: &mut [C64]| {
                    let mut tmp = vec![C64::new(0.0, 0.0); w * w];
                    f(x, &mut tmp);
                    out.copy_from_slice(&conj_transpose(&tmp, w));
                }))
            }
            TensorKind::Combination(terms) => TensorKind::Combination(
                terms.iter().map(|(c, t)| (c.conj(), t.adjoint())).collect(),
            ),
        };
        Self { m: self.m, n: self.n, kind }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: C64, other: &CoefficientTensor, b: C64) -> Result<Self> {
        self.check_shape(other)?;
        if let (TensorKind::Constant(x), TensorKind::Constant(y)) = (&self.kind, &other.kind) {
            let e = x.iter().zip(y).map(|(x, y)| a * x + b * y).collect();
            return Self::constant(self.m, self.n, e);
        }
        Ok(Self {
            m: self.m,
            n: self.n,
            kind: TensorKind::Combination(vec![(a, self.clone()), (b, other.clone())]),
        })
    }

    /// `self + eps * other`.
    pub fn perturbed(&self, other: &CoefficientTensor, eps: f64) -> Result<Self> {
        self.combine(C64::new(1.0, 0.0), other, C64::new(eps, 0.0))
    }

    /// `self - other`.
    pub fn difference(&self, other: &CoefficientTensor) -> Result<Self> {
        self.combine(C64::new(1.0, 0.0), other, C64::new(-1.0, 0.0))
    }

    pub fn scaled(&self, c: f64) -> Self {
        match &self.kind {
            TensorKind::Constant(e) => {
                Self::constant(self.m, self.n, e.iter().map(|v| v * c).collect()).unwrap()
            }
            _ => Self {
                m: self.m,
                n: self.n,
                kind: TensorKind::Combination(vec![(C64::new(c, 0.0), self.clone())]),
            },
        }
    }

    pub fn check_shape(&self, other: &CoefficientTensor) -> Result<()> {
        if self.m != other.m || self.n != other.n {
            return Err(LabError::ShapeMismatch {
                expected: format!("m={}, N={}", self.m, self.n),
                found: format!("m={}, N={}", other.m, other.n),
            });
        }
        Ok(())
    }

    /// Largest operator norm of `A(x)` over the given points.
    pub fn sup_norm(&self, points: &[Point2]) -> f64 {
        points
            .iter()
            .map(|&x| operator_norm(&self.matrix_at(x), self.width()))
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part of `A(x)` over the points.
    /// A positive value certifies the Garding inequality on any domain.
    pub fn pointwise_garding_bound(&self, points: &[Point2]) -> f64 {
        let w = self.width();
        points
            .iter()
            .map(|&x| {
                let a = self.matrix_at(x);
                let herm = DMatrix::from_fn(w, w, |i, j| 0.5 * (a[i * w + j] + a[j * w + i].conj()));
                herm.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, v| m.min(*v))
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Sample points at which this tensor should be probed for suprema: the
    /// given points plus every partition cell center of piecewise parts.
    pub fn probe_points(&self, base: &[Point2]) -> Vec<Point2> {
        let mut pts = base.to_vec();
        self.collect_partition_centers(&mut pts);
        pts
    }

    fn collect_partition_centers(&self, pts: &mut Vec<Point2>) {
        match &self.kind {
            TensorKind::PiecewiseConstant { partition, .. } => {
                pts.extend((0..partition.n_cells()).map(|c| partition.cell_center(c)))
            }
            TensorKind::Combination(t) => t.iter().for_each(|(_, a)| a.collect_partition_centers(pts)),
            _ => {}
        }
    }
}

pub fn apply_matrix(mat: &[C64], h: &[C64], out: &mut [C64]) {
    let w = h.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = mat[r * w..(r + 1) * w].iter().zip(h).map(|(a, b)| a * b).sum();
    }
}

fn conj_transpose(e: &[C64], w: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); w * w];
    for i in 0..w {
        for j in 0..w {
            out[i * w + j] = e[j * w + i].conj();
        }
    }
    out
}

/// Largest singular value of a row-major `w x w` complex matrix.
pub fn operator_norm(e: &[C64], w: usize) -> f64 {
    let m = DMatrix::from_fn(w, w, |i, j| e[i * w + j]);
    m.singular_values().iter().fold(0.0, |a, v| a.max(*v))
}

/// `max_x |A(x) - B(x)|` over the sample points, with the operator norm on arrays.
pub fn sup_distance(a: &CoefficientTensor, b: &CoefficientTensor, points: &[Point2]) -> Result<f64> {
    a.check_shape(b)?;
    let w = a.width();
    let pts = b.probe_points(&a.probe_points(points));
    Ok(pts
        .iter()
        .map(|&x| {
            let (ma, mb) = (a.matrix_at(x), b.matrix_at(x));
            let diff: Vec<C64> = ma.iter().zip(&mb).map(|(p, q)| p - q).collect();
            operator_norm(&diff, w)
        })
        .fold(0.0, f64::max))
}

/// Pointwise Hermitian form `<g, A h> = sum conj(g_r) (A h)_r`.
pub fn form(mat: &[C64], g: &[C64], h: &[C64]) -> C64 {
    let mut ah = vec![C64::new(0.0, 0.0); h.len()];
    apply_matrix(mat, h, &mut ah);
    g.iter().zip(&ah).map(|(g, v)| g.conj() * v).sum()
}

/// Summary of a Garding-constant estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityReport {
    pub lambda_hat: f64,
    pub big_lambda_hat: f64,
    /// `true` for the domain form of the inequality, `false` for the whole-space proxy.
    pub domain_local: bool,
}
