//! Conforming finite-element spaces: continuous P1 triangles for `m = 1` and
//! the C1 bicubic Hermite rectangle (Bogner-Fox-Schmit) for `m = 2`.
//!
//! Global dof `s * N + k` is scalar dof `s` of component `k`. P1 has one
//! scalar dof per vertex; the bicubic element has four, `(u, u_x, u_y, u_xy)`,
//! numbered `4 * vertex + kind`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::coefficients::multiindices;
use crate::error::{LabError, Result};
use crate::field::{ArrayField, GradientArray, Samples};
use crate::geometry::{CellKind, Mesh, Point2, DIM};
use crate::sum::ordered_map;

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);

/// Value and derivatives up to order two: `[v, v_x, v_y, v_xx, v_xy, v_yy]`.
pub type Jet = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    P1,
    Bicubic,
}

impl Element {
    pub fn order(self) -> usize {
        match self {
            Element::P1 => 1,
            Element::Bicubic => 2,
        }
    }
}

#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    element: Element,
    n: usize,
    boundary: Vec<bool>,
    quad: Arc<Samples>,
}

fn hermite(t: f64) -> [[f64; 3]; 4] {
    // value, first and second derivative of V0, V1, D0, D1 on [0, 1]
    let (t2, t3) = (t * t, t * t * t);
    [
        [1.0 - 3.0 * t2 + 2.0 * t3, -6.0 * t + 6.0 * t2, -6.0 + 12.0 * t],
        [3.0 * t2 - 2.0 * t3, 6.0 * t - 6.0 * t2, 6.0 - 12.0 * t],
        [t - 2.0 * t2 + t3, 1.0 - 4.0 * t + 3.0 * t2, -4.0 + 6.0 * t],
        [-t2 + t3, -2.0 * t + 3.0 * t2, -2.0 + 6.0 * t],
    ]
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, element: Element, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(LabError::InvalidParameter("system size N must be positive".into()));
        }
        match (element, mesh.kind()) {
            (Element::P1, CellKind::Triangle) | (Element::Bicubic, CellKind::Rectangle) => {}
            _ => {
                return Err(LabError::InvalidParameter(format!(
                    "element {element:?} does not fit a {:?} mesh",
                    mesh.kind()
                )))
            }
        }
        let nd = if element == Element::P1 { 1 } else { 4 };
        let nv = mesh.vertices().len();
        let mut boundary = vec![false; nv * nd * n];
        for v in 0..nv {
            if mesh.is_boundary_vertex(v) {
                for kind in 0..nd {
                    for k in 0..n {
                        boundary[(v * nd + kind) * n + k] = true;
                    }
                }
            }
        }
        let quad = Arc::new(Samples::assembly(mesh.clone()));
        Ok(Self { mesh, element, n, boundary, quad })
    }

    /// P1 for `m = 1` on a triangulation, bicubic for `m = 2` on a rectangle grid.
    pub fn for_order(mesh: Arc<Mesh>, m: usize, n: usize) -> Result<Self> {
        match m {
            1 => Self::new(mesh, Element::P1, n),
            2 => Self::new(mesh, Element::Bicubic, n),
            _ => Err(LabError::InvalidParameter(format!("order m = {m} is not supported"))),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn element(&self) -> Element {
        self.element
    }

    pub fn m(&self) -> usize {
        self.element.order()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodal_dofs(&self) -> usize {
        if self.element == Element::P1 {
            1
        } else {
            4
        }
    }

    pub fn n_scalar(&self) -> usize {
        self.mesh.vertices().len() * self.nodal_dofs()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_scalar() * self.n
    }

    /// Number of multiindices of order `m`.
    pub fn n_multi(&self) -> usize {
        multiindices(DIM, self.m()).len()
    }

    /// Width of `m`-th gradient arrays, `N * n_multi`.
    pub fn width(&self) -> usize {
        self.n * self.n_multi()
    }

    /// Width of `(m-1)`-st trace jets per component: 1 for `m = 1`, 3 for `m = 2`.
    pub fn trace_width(&self) -> usize {
        if self.m() == 1 {
            1
        } else {
            3
        }
    }

    pub fn assembly_samples(&self) -> &Arc<Samples> {
        &self.quad
    }

    pub fn is_boundary_dof(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&i| self.boundary[i]).collect()
    }

    /// Dofs left free by a homogeneous Dirichlet condition.
    pub fn interior_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&i| !self.boundary[i]).collect()
    }

    /// Scalar dofs of a cell in local order.
    pub fn local_scalar(&self, c: usize) -> Vec<usize> {
        let nd = self.nodal_dofs();
        self.mesh
            .cell(c)
            .iter()
            .flat_map(|&v| (0..nd).map(move |kind| v * nd + kind))
            .collect()
    }

    /// Jets of the local basis functions at reference point `(xi, eta)`.
    pub fn basis_jets(&self, c: usize, xi: f64, eta: f64) -> Vec<Jet> {
        let p = self.mesh.cell_points(c);
        match self.element {
            Element::P1 => {
                let (ax, ay) = (p[1].x - p[0].x, p[1].y - p[0].y);
                let (bx, by) = (p[2].x - p[0].x, p[2].y - p[0].y);
                let det = ax * by - bx * ay;
                // rows of J^{-T} applied to reference gradients (-1,-1), (1,0), (0,1)
                let g1 = [by / det, -bx / det];
                let g2 = [-ay / det, ax / det];
                vec![
                    [1.0 - xi - eta, -g1[0] - g2[0], -g1[1] - g2[1], 0.0, 0.0, 0.0],
                    [xi, g1[0], g1[1], 0.0, 0.0, 0.0],
                    [eta, g2[0], g2[1], 0.0, 0.0, 0.0],
                ]
            }
            Element::Bicubic => {
                let (hx, hy) = (p[2].x - p[0].x, p[2].y - p[0].y);
                let (fx, fy) = (hermite(xi), hermite(eta));
                let corners = [(0, 0), (1, 0), (1, 1), (0, 1)];
                let mut out = Vec::with_capacity(16);
                for &(a, b) in &corners {
                    for kind in 0..4 {
                        let (f, sx) = if kind == 1 || kind == 3 { (fx[2 + a], hx) } else { (fx[a], 1.0) };
                        let (g, sy) = if kind >= 2 { (fy[2 + b], hy) } else { (fy[b], 1.0) };
                        let s = sx * sy;
                        out.push([
                            s * f[0] * g[0],
                            s * f[1] * g[0] / hx,
                            s * f[0] * g[1] / hy,
                            s * f[2] * g[0] / (hx * hx),
                            s * f[1] * g[1] / (hx * hy),
                            s * f[0] * g[2] / (hy * hy),
                        ]);
                    }
                }
                out
            }
        }
    }

    /// Weighted `m`-th derivative slots of a scalar jet.
    pub fn grad_m_slots(&self, j: &Jet) -> [f64; 3] {
        match self.m() {
            1 => [j[1], j[2], 0.0],
            _ => [j[3], std::f64::consts::SQRT_2 * j[4], j[5]],
        }
    }

    /// `(m-1)`-st trace slots of a scalar jet: `[v]` or `[v, v_x, v_y]`.
    pub fn trace_slots(&self, j: &Jet) -> [f64; 3] {
        match self.m() {
            1 => [j[0], 0.0, 0.0],
            _ => [j[0], j[1], j[2]],
        }
    }

    /// Jets of a dof vector at a reference point, one per component.
    pub fn eval_jets(&self, dofs: &[C64], c: usize, xi: f64, eta: f64) -> Vec<[C64; 6]> {
        let local = self.local_scalar(c);
        let jets = self.basis_jets(c, xi, eta);
        let mut out = vec![[ZERO; 6]; self.n];
        for (s, j) in local.iter().zip(&jets) {
            for (k, o) in out.iter_mut().enumerate() {
                let d = dofs[s * self.n + k];
                if d != ZERO {
                    for r in 0..6 {
                        o[r] += d * j[r];
                    }
                }
            }
        }
        out
    }

    /// Jets at an arbitrary point, `None` outside the mesh.
    pub fn eval_jets_at(&self, dofs: &[C64], x: Point2) -> Option<Vec<[C64; 6]>> {
        let (c, xi, eta) = self.mesh.locate(x)?;
        Some(self.eval_jets(dofs, c, xi, eta))
    }

    /// `m`-th gradient array of a dof vector at every sample.
    pub fn gradient(&self, dofs: &[C64], samples: &Arc<Samples>) -> GradientArray {
        let (w, nm) = (self.width(), self.n_multi());
        let same_mesh = Arc::ptr_eq(samples.mesh(), &self.mesh);
        let rows = ordered_map(samples.len(), |i| {
            let mut row = vec![ZERO; w];
            let jets = if same_mesh {
                Some(self.eval_jets(dofs, samples.cells[i], samples.refs[i].0, samples.refs[i].1))
            } else {
                self.eval_jets_at(dofs, samples.points[i])
            };
            if let Some(jets) = jets {
                for (k, j) in jets.iter().enumerate() {
                    let slots = match self.m() {
                        1 => [j[1], j[2], ZERO],
                        _ => [j[3], j[4] * std::f64::consts::SQRT_2, j[5]],
                    };
                    row[k * nm..(k + 1) * nm].copy_from_slice(&slots[..nm]);
                }
            }
            row
        });
        GradientArray::from_values(samples.clone(), w, rows.concat()).unwrap()
    }

    /// Interpolates per-component Hermite data `[u, u_x, u_y, u_xy]` at vertices.
    pub fn interpolate(&self, f: impl Fn(Point2) -> Vec<[C64; 4]>) -> Vec<C64> {
        let nd = self.nodal_dofs();
        let mut dofs = vec![ZERO; self.n_dofs()];
        for (v, &p) in self.mesh.vertices().iter().enumerate() {
            let vals = f(p);
            for k in 0..self.n {
                for kind in 0..nd {
                    dofs[(v * nd + kind) * self.n + k] = vals[k][kind];
                }
            }
        }
        dofs
    }

    /// Real scalar version of [`FeSpace::interpolate`] for `N = 1`.
    pub fn interpolate_scalar(&self, f: impl Fn(Point2) -> [f64; 4]) -> Vec<C64> {
        self.interpolate(|p| {
            let v = f(p);
            vec![[C64::from(v[0]), C64::from(v[1]), C64::from(v[2]), C64::from(v[3])]]
        })
    }

    /// Basis of polynomials of degree `<= m - 1` as dof vectors:
    /// `N` constants, or `3N` functions `1, x, y` for `m = 2`.
    pub fn kernel_basis(&self) -> Vec<Vec<C64>> {
        let mut out = Vec::new();
        let one = C64::new(1.0, 0.0);
        for k in 0..self.n {
            let unit = |vals: [C64; 4]| -> Vec<C64> {
                self.interpolate(|_| {
                    let mut v = vec![[ZERO; 4]; self.n];
                    v[k] = vals;
                    v
                })
            };
            out.push(unit([one, ZERO, ZERO, ZERO]));
            if self.m() == 2 {
                out.push(self.interpolate(|p| {
                    let mut v = vec![[ZERO; 4]; self.n];
                    v[k] = [C64::from(p.x), one, ZERO, ZERO];
                    v
                }));
                out.push(self.interpolate(|p| {
                    let mut v = vec![[ZERO; 4]; self.n];
                    v[k] = [C64::from(p.y), ZERO, one, ZERO];
                    v
                }));
            }
        }
        out
    }

    /// Dofs fixed to remove the kernel: value (and gradient for `m = 2`) at vertex 0.
    pub fn pinned_dofs(&self) -> Vec<usize> {
        let kinds = if self.m() == 1 { 1 } else { 3 };
        let mut out: Vec<usize> = (0..kinds).flat_map(|kind| (0..self.n).map(move |k| kind * self.n + k)).collect();
        out.sort_unstable();
        out
    }

    pub fn unpinned_dofs(&self) -> Vec<usize> {
        let pinned = self.pinned_dofs();
        (0..self.n_dofs()).filter(|i| pinned.binary_search(i).is_err()).collect()
    }

    /// Gauge functionals `v -> int D v` for `D` ranging over derivatives of
    /// order `< m` and every component, as dual vectors over dofs.
    pub fn gauge_functionals(&self) -> Vec<Vec<C64>> {
        let kinds = if self.m() == 1 { 1 } else { 3 };
        let mut out = vec![vec![ZERO; self.n_dofs()]; kinds * self.n];
        for c in 0..self.mesh.n_cells() {
            let local = self.local_scalar(c);
            for q in self.quad.cell_range(c).unwrap() {
                let (xi, eta) = self.quad.refs[q];
                let w = self.quad.weights[q];
                for (s, j) in local.iter().zip(self.basis_jets(c, xi, eta)) {
                    for kind in 0..kinds {
                        for k in 0..self.n {
                            out[kind * self.n + k][s * self.n + k] += C64::from(w * j[kind]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Removes the polynomial kernel so every gauge functional vanishes.
    pub fn remove_kernel(&self, dofs: &mut [C64]) {
        let z = self.kernel_basis();
        let g = self.gauge_functionals();
        let k = z.len();
        let apply = |f: &[C64], v: &[C64]| -> C64 { f.iter().zip(v).map(|(a, b)| a * b).sum() };
        let m = nalgebra::DMatrix::from_fn(k, k, |l, j| apply(&g[l], &z[j]));
        let rhs = nalgebra::DVector::from_fn(k, |l, _| apply(&g[l], dofs));
        let coef = m.lu().solve(&rhs).expect("gauge matrix is invertible on a nonempty domain");
        for (j, zj) in z.iter().enumerate() {
            for (d, zz) in dofs.iter_mut().zip(zj) {
                *d -= coef[j] * zz;
            }
        }
    }
}

/// Whether a solution was normalized modulo the polynomial kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    None,
    KernelRemoved,
}

/// Dof vector with its space.
#[derive(Debug, Clone)]
pub struct FeSolution {
    pub space: Arc<FeSpace>,
    pub dofs: Vec<C64>,
    pub gauge: Gauge,
}

impl FeSolution {
    pub fn new(space: Arc<FeSpace>, dofs: Vec<C64>) -> Self {
        assert_eq!(dofs.len(), space.n_dofs());
        Self { space, dofs, gauge: Gauge::None }
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.n_dofs();
        Self::new(space, vec![ZERO; n])
    }

    pub fn gradient(&self, samples: &Arc<Samples>) -> GradientArray {
        self.space.gradient(&self.dofs, samples)
    }

    pub fn gradient_field(&self) -> FeGradient<'_> {
        FeGradient { space: &self.space, dofs: &self.dofs }
    }

    pub fn combine(&self, a: C64, other: &FeSolution, b: C64) -> FeSolution {
        assert!(Arc::ptr_eq(&self.space, &other.space));
        let dofs = self.dofs.iter().zip(&other.dofs).map(|(x, y)| a * x + b * y).collect();
        FeSolution::new(self.space.clone(), dofs)
    }

    /// CSV with columns `dof,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dof,re,im\n");
        for (i, d) in self.dofs.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", d.re, d.im));
        }
        out
    }
}

/// `m`-th gradient of a finite-element function as a field.
pub struct FeGradient<'a> {
    pub space: &'a FeSpace,
    pub dofs: &'a [C64],
}

impl ArrayField for FeGradient<'_> {
    fn width(&self) -> usize {
        self.space.width()
    }

    fn eval(&self, x: Point2, out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        let nm = self.space.n_multi();
        if let Some(jets) = self.space.eval_jets_at(self.dofs, x) {
            for (k, j) in jets.iter().enumerate() {
                let slots = match self.space.m() {
                    1 => [j[1], j[2], ZERO],
                    _ => [j[3], j[4] * std::f64::consts::SQRT_2, j[5]],
                };
                out[k * nm..(k + 1) * nm].copy_from_slice(&slots[..nm]);
            }
        }
    }

    fn sample(&self, samples: &Arc<Samples>) -> GradientArray {
        self.space.gradient(self.dofs, samples)
    }
}
