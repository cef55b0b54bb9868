//! Assembly of `<D^m phi, A D^m u>` and `<D^m phi, H>`, energy solves with
//! Dirichlet or Neumann conditions, Neumann data, residuals, the Newton
//! potential on a padded box, and the interior Caccioppoli monitor.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coefficients::{CoefficientTensor, EllipticityReport};
use crate::error::{LabError, Result};
use crate::fem::{FeSolution, FeSpace, Gauge};
use crate::field::{ArrayField, FnField, GradientArray, Samples};
use crate::geometry::{boundary_quadrature, BoundaryPoint, Mesh, Point2, PolygonalDomain};
use crate::linalg::{norm2, CsrMatrix, ReducedSolver};
use crate::sum::{ordered_map, pairwise_sum};

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

fn check_tensor(space: &FeSpace, a: &CoefficientTensor) -> Result<()> {
    if a.m() != space.m() || a.n() != space.n() {
        return Err(LabError::ShapeMismatch {
            expected: format!("m={}, N={}", space.m(), space.n()),
            found: format!("m={}, N={}", a.m(), a.n()),
        });
    }
    Ok(())
}

/// `S[i, j] = <D^m phi_i, A D^m phi_j>` by the assembly quadrature.
pub fn assemble_stiffness(space: &FeSpace, a: &CoefficientTensor) -> Result<CsrMatrix> {
    check_tensor(space, a)?;
    let (n, nm, w) = (space.n(), space.n_multi(), space.width());
    let quad = space.assembly_samples();
    let mesh = space.mesh();
    let blocks = ordered_map(mesh.n_cells(), |c| {
        let local = space.local_scalar(c);
        let nl = local.len() * n;
        let mut k = vec![ZERO; nl * nl];
        let mut mat = vec![ZERO; w * w];
        for q in quad.cell_range(c).unwrap() {
            let (xi, eta) = quad.refs[q];
            a.eval(quad.points[q], &mut mat);
            let wq = quad.weights[q];
            let g: Vec<[f64; 3]> = space.basis_jets(c, xi, eta).iter().map(|j| space.grad_m_slots(j)).collect();
            for (lb, gb) in g.iter().enumerate() {
                for l in 0..n {
                    // column (b, l) of A applied to the basis gradient
                    let mut col = vec![ZERO; w];
                    for (row, cv) in col.iter_mut().enumerate() {
                        let base = row * w + l * nm;
                        *cv = (0..nm).map(|r| mat[base + r] * gb[r]).sum();
                    }
                    for (la, ga) in g.iter().enumerate() {
                        for kk in 0..n {
                            let v: C64 = (0..nm).map(|r| col[kk * nm + r] * ga[r]).sum();
                            k[(la * n + kk) * nl + lb * n + l] += v * wq;
                        }
                    }
                }
            }
        }
        (local, k)
    });
    let mut triplets = Vec::new();
    for (local, k) in blocks {
        let nl = local.len() * n;
        for (la, &sa) in local.iter().enumerate() {
            for kk in 0..n {
                for (lb, &sb) in local.iter().enumerate() {
                    for l in 0..n {
                        let v = k[(la * n + kk) * nl + lb * n + l];
                        triplets.push((sa * n + kk, sb * n + l, v));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(space.n_dofs(), triplets))
}

/// `b[i] = <D^m phi_i, H>` for `H` sampled on the assembly quadrature.
pub fn assemble_load(space: &FeSpace, h: &GradientArray) -> Result<Vec<C64>> {
    if !Arc::ptr_eq(h.samples(), space.assembly_samples()) || h.width() != space.width() {
        return Err(LabError::ShapeMismatch {
            expected: format!("width {} on the assembly quadrature", space.width()),
            found: format!("width {}", h.width()),
        });
    }
    let (n, nm) = (space.n(), space.n_multi());
    let quad = space.assembly_samples();
    let parts = ordered_map(space.mesh().n_cells(), |c| {
        let local = space.local_scalar(c);
        let mut b = vec![ZERO; local.len() * n];
        for q in quad.cell_range(c).unwrap() {
            let (xi, eta) = quad.refs[q];
            let hv = h.at(q);
            let wq = quad.weights[q];
            for (la, j) in space.basis_jets(c, xi, eta).iter().enumerate() {
                let g = space.grad_m_slots(j);
                for k in 0..n {
                    let v: C64 = (0..nm).map(|r| hv[k * nm + r] * g[r]).sum();
                    b[la * n + k] += v * wq;
                }
            }
        }
        (local, b)
    });
    let mut out = vec![ZERO; space.n_dofs()];
    for (local, b) in parts {
        for (la, &s) in local.iter().enumerate() {
            for k in 0..n {
                out[s * n + k] += b[la * n + k];
            }
        }
    }
    Ok(out)
}

pub fn load_from_field(space: &FeSpace, h: &dyn ArrayField) -> Result<Vec<C64>> {
    assemble_load(space, &h.sample(space.assembly_samples()))
}

/// A functional on boundary trace dofs, indexed like [`FeSpace::boundary_dofs`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunctional {
    pub values: Vec<C64>,
}

impl BoundaryFunctional {
    pub fn zero(space: &FeSpace) -> Self {
        Self { values: vec![ZERO; space.boundary_dofs().len()] }
    }

    pub fn from_full(space: &FeSpace, full: &[C64]) -> Self {
        Self { values: space.boundary_dofs().iter().map(|&i| full[i]).collect() }
    }

    pub fn to_full(&self, space: &FeSpace) -> Vec<C64> {
        let mut out = vec![ZERO; space.n_dofs()];
        for (&i, v) in space.boundary_dofs().iter().zip(&self.values) {
            out[i] = *v;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// `g_i = int_{bdry} sum_k <Tr_{m-1} phi_i, g_k> d sigma` where `g` writes
/// `N * trace_width` values per boundary point (component-major).
pub fn assemble_boundary_functional(
    space: &FeSpace,
    order: usize,
    g: impl Fn(&BoundaryPoint, &mut [C64]),
) -> Result<BoundaryFunctional> {
    let mesh = space.mesh();
    let bq = boundary_quadrature(mesh, order)?;
    let (n, tw) = (space.n(), space.trace_width());
    let mut full = vec![ZERO; space.n_dofs()];
    let mut gv = vec![ZERO; n * tw];
    for bp in &bq.points {
        let cell = mesh.boundary_edges()[bp.edge].cell;
        let (xi, eta) = mesh.reference_coords(cell, bp.point);
        g(bp, &mut gv);
        for (s, j) in space.local_scalar(cell).iter().zip(space.basis_jets(cell, xi, eta)) {
            let t = space.trace_slots(&j);
            for k in 0..n {
                let v: C64 = (0..tw).map(|r| gv[k * tw + r] * t[r]).sum();
                full[s * n + k] += v * bp.weight;
            }
        }
    }
    Ok(BoundaryFunctional::from_full(space, &full))
}

/// Smallest eigenvalue of `Herm(S) x = lambda G x` on the dofs `keep`.
fn discrete_garding(space: &FeSpace, a: &CoefficientTensor, keep: &[usize]) -> Result<f64> {
    let s = assemble_stiffness(space, a)?.principal_submatrix(keep);
    let g = assemble_stiffness(space, &CoefficientTensor::identity(space.m(), space.n()))?.principal_submatrix(keep);
    let n = keep.len();
    if n == 0 {
        return Err(LabError::InvalidParameter("no free dofs".into()));
    }
    let sd = s.to_dense();
    let gd = g.to_dense();
    let herm = |i: usize, j: usize| 0.5 * (sd[i * n + j] + sd[j * n + i].conj());
    let gram = DMatrix::from_fn(n, n, |i, j| gd[i * n + j].re);
    let chol = gram
        .cholesky()
        .ok_or_else(|| LabError::Singular("Gram matrix of the finite-element space is not positive definite".into()))?;
    let l = chol.l();
    let real = (0..n).all(|i| (0..n).all(|j| herm(i, j).im.abs() <= 1e-14 * herm(i, j).norm().max(1e-300)));
    let min_eig = if real {
        let hm = DMatrix::from_fn(n, n, |i, j| herm(i, j).re);
        let x = l.solve_lower_triangular(&hm).unwrap();
        let c = l.solve_lower_triangular(&x.transpose()).unwrap();
        let c = (&c + c.transpose()) * 0.5;
        c.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, v| m.min(*v))
    } else {
        let hm = DMatrix::from_fn(n, n, herm);
        let lc = l.map(C64::from);
        let x = lc.solve_lower_triangular(&hm).unwrap();
        let c = lc.solve_lower_triangular(&x.adjoint()).unwrap();
        let c = (&c + c.adjoint()) * C64::from(0.5);
        c.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, v| m.min(*v))
    };
    Ok(min_eig)
}

/// Discrete Garding constant of `A` on `space`.
///
/// With `local` the quotient of the whole space by the polynomial kernel is
/// used (the inequality on the domain); otherwise `space` is read as a mesh
/// of a large box and its homogeneous Dirichlet subspace is used as a proxy
/// for the whole plane.
pub fn estimate_garding_constant(a: &CoefficientTensor, space: &FeSpace, local: bool) -> Result<EllipticityReport> {
    check_tensor(space, a)?;
    let keep = if local { space.unpinned_dofs() } else { space.interior_dofs() };
    let lambda_hat = discrete_garding(space, a, &keep)?;
    let big = a.sup_norm(&a.probe_points(&space.assembly_samples().points));
    Ok(EllipticityReport { lambda_hat, big_lambda_hat: big, domain_local: local })
}

/// Axis-aligned square of side `factor * diam` around the domain's box,
/// snapped to the grid of the given spacing anchored at the domain's corner.
pub fn padded_box(domain: &PolygonalDomain, spacing: f64, factor: f64) -> Result<PolygonalDomain> {
    let bb = domain.bbox();
    let target = factor * domain.diameter();
    let pad = |len: f64| (((target - len) * 0.5 / spacing).ceil().max(1.0)) * spacing;
    let (px, py) = (pad(bb.width()), pad(bb.height()));
    PolygonalDomain::rectangle(bb.min.x - px, bb.min.y - py, bb.max.x + px, bb.max.y + py)
}

fn structured_mesh(domain: &PolygonalDomain, spacing: f64, m: usize) -> Result<Mesh> {
    match m {
        1 => Mesh::rect_grid_triangles(domain, spacing),
        2 => Mesh::rect_grid(domain, spacing),
        _ => Err(LabError::InvalidParameter(format!("order m = {m} is not supported"))),
    }
}

/// Garding constant on a Dirichlet box of side `box_factor * diam`.
pub fn garding_on_box(
    a: &CoefficientTensor,
    domain: &PolygonalDomain,
    spacing: f64,
    box_factor: f64,
) -> Result<EllipticityReport> {
    let bx = padded_box(domain, spacing, box_factor)?;
    let mesh = Arc::new(structured_mesh(&bx, spacing, a.m())?);
    let space = FeSpace::for_order(mesh, a.m(), a.n())?;
    estimate_garding_constant(a, &space, false)
}

/// Factored energy problem for one tensor and one boundary condition.
#[derive(Debug, Clone)]
pub struct BvpSolver {
    space: Arc<FeSpace>,
    tensor: CoefficientTensor,
    kind: BoundaryKind,
    stiffness: CsrMatrix,
    solver: ReducedSolver,
    report: EllipticityReport,
    kernel: Vec<Vec<C64>>,
}

impl BvpSolver {
    /// Assembles and factors, refusing tensors that fail the coercivity check.
    ///
    /// The pointwise bound `min_x lambda_min(Herm A(x))` is tried first; when it
    /// is not positive the discrete Garding constant on the admissible space decides.
    pub fn new(space: Arc<FeSpace>, tensor: CoefficientTensor, kind: BoundaryKind) -> Result<Self> {
        check_tensor(&space, &tensor)?;
        let pts = tensor.probe_points(&space.assembly_samples().points);
        let pointwise = tensor.pointwise_garding_bound(&pts);
        let big = tensor.sup_norm(&pts);
        let report = if pointwise > 0.0 {
            EllipticityReport { lambda_hat: pointwise, big_lambda_hat: big, domain_local: true }
        } else {
            let local = kind == BoundaryKind::Neumann;
            let r = estimate_garding_constant(&tensor, &space, local)?;
            if r.lambda_hat <= 1e-12 {
                return Err(LabError::NotCoercive(r));
            }
            r
        };
        let stiffness = assemble_stiffness(&space, &tensor)?;
        let keep = match kind {
            BoundaryKind::Dirichlet => space.interior_dofs(),
            BoundaryKind::Neumann => space.unpinned_dofs(),
        };
        let solver = ReducedSolver::new(&stiffness, keep)?;
        let kernel = if kind == BoundaryKind::Neumann { space.kernel_basis() } else { Vec::new() };
        Ok(Self { space, tensor, kind, stiffness, solver, report, kernel })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn tensor(&self) -> &CoefficientTensor {
        &self.tensor
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn report(&self) -> EllipticityReport {
        self.report
    }

    /// Solves `S u = b` on the admissible dofs. Neumann right-hand sides must
    /// annihilate the kernel; the result is gauged.
    pub fn solve_rhs(&self, b: &[C64]) -> Result<FeSolution> {
        let bn = norm2(b);
        if bn == 0.0 {
            let mut z = FeSolution::zero(self.space.clone());
            if self.kind == BoundaryKind::Neumann {
                z.gauge = Gauge::KernelRemoved;
            }
            return Ok(z);
        }
        if self.kind == BoundaryKind::Neumann {
            for z in &self.kernel {
                let pairing: C64 = z.iter().zip(b).map(|(p, q)| p * q).sum();
                let relative = pairing.norm() / (norm2(z) * bn);
                if relative > 1e-8 {
                    return Err(LabError::IncompatibleData { pairing: pairing.norm(), relative });
                }
            }
        }
        let dofs = self.solver.solve(b);
        let mut u = FeSolution::new(self.space.clone(), dofs);
        if self.kind == BoundaryKind::Neumann {
            self.space.remove_kernel(&mut u.dofs);
            u.gauge = Gauge::KernelRemoved;
        }
        Ok(u)
    }

    /// Solves with data `H` and, for Neumann problems, boundary functional `g`.
    pub fn solve_with(&self, h: &dyn ArrayField, g: Option<&BoundaryFunctional>) -> Result<FeSolution> {
        let mut b = load_from_field(&self.space, h)?;
        if let Some(g) = g {
            if self.kind == BoundaryKind::Dirichlet {
                return Err(LabError::InvalidParameter("Neumann data given to a Dirichlet problem".into()));
            }
            b.iter_mut().zip(g.to_full(&self.space)).for_each(|(x, y)| *x += y);
        }
        self.solve_rhs(&b)
    }

    pub fn solve(&self, h: &dyn ArrayField) -> Result<FeSolution> {
        self.solve_with(h, None)
    }

    pub fn solve_array(&self, h: &GradientArray) -> Result<FeSolution> {
        self.solve_rhs(&assemble_load(&self.space, h)?)
    }
}

pub fn solve_dirichlet(a: &CoefficientTensor, h: &dyn ArrayField, space: &Arc<FeSpace>) -> Result<FeSolution> {
    BvpSolver::new(space.clone(), a.clone(), BoundaryKind::Dirichlet)?.solve(h)
}

pub fn solve_neumann(
    a: &CoefficientTensor,
    h: &dyn ArrayField,
    g: &BoundaryFunctional,
    space: &Arc<FeSpace>,
) -> Result<FeSolution> {
    BvpSolver::new(space.clone(), a.clone(), BoundaryKind::Neumann)?.solve_with(h, Some(g))
}

/// `phi -> <D^m phi, A D^m u - H>` on boundary-supported basis functions.
pub fn extract_neumann_data(a: &CoefficientTensor, u: &FeSolution, h: &dyn ArrayField) -> Result<BoundaryFunctional> {
    let s = assemble_stiffness(&u.space, a)?;
    let su = s.matvec(&u.dofs);
    let b = load_from_field(&u.space, h)?;
    let r: Vec<C64> = su.iter().zip(&b).map(|(x, y)| x - y).collect();
    Ok(BoundaryFunctional::from_full(&u.space, &r))
}

/// Relative Galerkin residual
/// `max_i |<D^m phi_i, A D^m u - H> - g_i| / (|D^m phi_i| (|A D^m u| + |H|))`
/// over interior basis functions (Dirichlet) or all of them (Neumann).
pub fn residual_with(
    a: &CoefficientTensor,
    u: &FeSolution,
    h: &dyn ArrayField,
    g: Option<&BoundaryFunctional>,
    kind: BoundaryKind,
) -> Result<f64> {
    let space = &u.space;
    let s = assemble_stiffness(space, a)?;
    let gram = assemble_stiffness(space, &CoefficientTensor::identity(space.m(), space.n()))?;
    let quad = space.assembly_samples();
    let hs = h.sample(quad);
    let b = assemble_load(space, &hs)?;
    let su = s.matvec(&u.dofs);
    let gfull = g.map(|g| g.to_full(space));
    let au = u.gradient(quad).apply_tensor(a)?;
    let scale = au.l2_norm() + hs.l2_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let rows: Vec<usize> = match kind {
        BoundaryKind::Dirichlet => space.interior_dofs(),
        BoundaryKind::Neumann => (0..space.n_dofs()).collect(),
    };
    Ok(rows
        .iter()
        .map(|&i| {
            let mut r = su[i] - b[i];
            if let Some(gf) = &gfull {
                r -= gf[i];
            }
            r.norm() / (gram.get(i, i).re.sqrt() * scale)
        })
        .fold(0.0, f64::max))
}

pub fn residual(a: &CoefficientTensor, u: &FeSolution, h: &dyn ArrayField, kind: BoundaryKind) -> Result<f64> {
    residual_with(a, u, h, None, kind)
}

/// Newton potential of a constant tensor: the Dirichlet solve on a padded box
/// whose structured mesh contains the domain mesh.
#[derive(Debug, Clone)]
pub struct NewtonPotential {
    domain: PolygonalDomain,
    omega: Arc<FeSpace>,
    solver: BvpSolver,
    adjoint: BvpSolver,
    dof_map: Vec<usize>,
    padding: f64,
    spacing: f64,
}

impl NewtonPotential {
    pub fn new(
        a0: &CoefficientTensor,
        domain: &PolygonalDomain,
        omega: &Arc<FeSpace>,
        spacing: f64,
        padding: f64,
    ) -> Result<Self> {
        if !a0.is_constant() {
            return Err(LabError::InvalidParameter("the Newton potential needs constant coefficients".into()));
        }
        if padding < 1.0 {
            return Err(LabError::InvalidParameter(format!("padding factor {padding} < 1")));
        }
        let bx = padded_box(domain, spacing, padding)?;
        let mesh = Arc::new(structured_mesh(&bx, spacing, omega.m())?);
        let om = omega.mesh();
        let mut vmap = Vec::with_capacity(om.vertices().len());
        for &p in om.vertices() {
            vmap.push(mesh.find_vertex(p, 1e-9 * spacing).ok_or_else(|| {
                LabError::InvalidParameter("domain mesh is not aligned with the structured box grid".into())
            })?);
        }
        for c in 0..om.n_cells() {
            let pts = om.cell_points(c);
            let nv = om.cell(c).len();
            let centroid = Point2::new(
                pts[..nv].iter().map(|p| p.x).sum::<f64>() / nv as f64,
                pts[..nv].iter().map(|p| p.y).sum::<f64>() / nv as f64,
            );
            let (bc, _, _) = mesh.locate(centroid).ok_or_else(|| LabError::InvalidParameter("cell outside box".into()))?;
            let mut a: Vec<usize> = om.cell(c).iter().map(|&v| vmap[v]).collect();
            let mut b: Vec<usize> = mesh.cell(bc).to_vec();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(LabError::InvalidParameter(
                    "domain cells do not coincide with box cells; build the domain mesh on the same structured grid".into(),
                ));
            }
        }
        let box_space = Arc::new(FeSpace::for_order(mesh, omega.m(), omega.n())?);
        let nd = omega.nodal_dofs();
        let n = omega.n();
        let mut dof_map = vec![0; omega.n_dofs()];
        for (v, &bv) in vmap.iter().enumerate() {
            for kind in 0..nd {
                for k in 0..n {
                    dof_map[(v * nd + kind) * n + k] = (bv * nd + kind) * n + k;
                }
            }
        }
        let solver = BvpSolver::new(box_space.clone(), a0.clone(), BoundaryKind::Dirichlet)?;
        let adjoint = BvpSolver::new(box_space, a0.adjoint(), BoundaryKind::Dirichlet)?;
        Ok(Self { domain: domain.clone(), omega: omega.clone(), solver, adjoint, dof_map, padding, spacing })
    }

    pub fn box_space(&self) -> &Arc<FeSpace> {
        self.solver.space()
    }

    pub fn padding(&self) -> f64 {
        self.padding
    }

    fn masked<'a>(&'a self, h: &'a dyn ArrayField) -> impl ArrayField + 'a {
        FnField::new(h.width(), move |x, out: &mut [C64]| {
            if self.domain.contains(x) {
                h.eval(x, out)
            } else {
                out.iter_mut().for_each(|v| *v = ZERO)
            }
        })
    }

    /// Box solution for data `H` extended by zero outside the domain.
    pub fn apply(&self, h: &dyn ArrayField) -> Result<FeSolution> {
        self.solver.solve(&self.masked(h))
    }

    /// Same with the adjoint tensor.
    pub fn apply_adjoint(&self, h: &dyn ArrayField) -> Result<FeSolution> {
        self.adjoint.solve(&self.masked(h))
    }

    /// Restriction of a box function to the domain space.
    pub fn restrict(&self, u: &FeSolution) -> FeSolution {
        let dofs = self.dof_map.iter().map(|&j| u.dofs[j]).collect();
        FeSolution::new(self.omega.clone(), dofs)
    }

    /// Extension by zero of a domain function to the box (valid for functions
    /// whose boundary dofs vanish).
    pub fn extend(&self, u: &FeSolution) -> FeSolution {
        let mut dofs = vec![ZERO; self.box_space().n_dofs()];
        for (i, &j) in self.dof_map.iter().enumerate() {
            dofs[j] = u.dofs[i];
        }
        FeSolution::new(self.box_space().clone(), dofs)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub on_box: FeSolution,
    pub on_domain: FeSolution,
    /// Relative change of `D^m u` on the domain when the padding is doubled.
    pub truncation: Option<f64>,
}

pub fn newton_potential(
    a0: &CoefficientTensor,
    h: &dyn ArrayField,
    domain: &PolygonalDomain,
    omega: &Arc<FeSpace>,
    spacing: f64,
    padding: f64,
    with_indicator: bool,
) -> Result<NewtonResult> {
    let np = NewtonPotential::new(a0, domain, omega, spacing, padding)?;
    let on_box = np.apply(h)?;
    let on_domain = np.restrict(&on_box);
    let truncation = if with_indicator {
        let wide = NewtonPotential::new(a0, domain, omega, spacing, 2.0 * padding)?;
        let u2 = wide.restrict(&wide.apply(h)?);
        let q = omega.assembly_samples();
        let g2 = u2.gradient(q);
        let diff = on_domain.gradient(q).combine(C64::from(1.0), &g2, C64::from(-1.0))?;
        let base = g2.l2_norm();
        Some(if base > 0.0 { diff.l2_norm() / base } else { diff.l2_norm() })
    } else {
        None
    };
    Ok(NewtonResult { on_box, on_domain, truncation })
}

/// Ratio of the two sides of the interior Meyers-Caccioppoli estimate
/// `(avg_{B(x,r)} |D^m u|^2)^{1/2}` over
/// `(avg_{B(x,2r)} |D^m u|^p)^{1/p} + (avg_{B(x,2r)} |H|^2)^{1/2}`.
#[allow(clippy::too_many_arguments)]
pub fn caccioppoli_ratio(
    a: &CoefficientTensor,
    u: &FeSolution,
    h: &dyn ArrayField,
    domain: &PolygonalDomain,
    center: Point2,
    r: f64,
    p: f64,
    samples: &Arc<Samples>,
) -> Result<f64> {
    if !(p > 0.0 && p < 2.0) {
        return Err(LabError::InvalidParameter(format!("exponent p = {p} outside (0, 2)")));
    }
    if !domain.contains(center) || domain.distance_to_boundary(center) < 2.0 * r {
        return Err(LabError::BallNotContained { center: [center.x, center.y], radius: 2.0 * r });
    }
    let space = &u.space;
    // discrete A-harmonicity against test functions supported in B(x, 2r)
    let s = assemble_stiffness(space, a)?;
    let b = load_from_field(space, h)?;
    let su = s.matvec(&u.dofs);
    let reach = 2.0 * r - space.mesh().h();
    let nd = space.nodal_dofs();
    let scale = su.iter().chain(&b).map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (v, &pv) in space.mesh().vertices().iter().enumerate() {
        if pv.dist(center) < reach {
            for kind in 0..nd {
                for k in 0..space.n() {
                    let i = (v * nd + kind) * space.n() + k;
                    worst = worst.max((su[i] - b[i]).norm() / scale);
                }
            }
        }
    }
    if worst > 1e-8 {
        return Err(LabError::InvalidParameter(format!(
            "u is not discretely A-harmonic in the ball (relative residual {worst:.2e})"
        )));
    }
    let du = u.gradient(samples).pointwise_sq();
    let hs = h.sample(samples).pointwise_sq();
    let avg = |radius: f64, f: &dyn Fn(usize) -> f64| -> f64 {
        let (mut num, mut den) = (Vec::new(), Vec::new());
        for i in 0..samples.len() {
            if samples.points[i].dist(center) < radius {
                num.push(samples.weights[i] * f(i));
                den.push(samples.weights[i]);
            }
        }
        pairwise_sum(&num) / pairwise_sum(&den)
    };
    let lhs = avg(r, &|i| du[i]).sqrt();
    let rhs = avg(2.0 * r, &|i| du[i].powf(p / 2.0)).powf(1.0 / p) + avg(2.0 * r, &|i| hs[i]).sqrt();
    if rhs == 0.0 {
        return Ok(if lhs == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(lhs / rhs)
}

/// Structured mesh for order `m`: split squares for `m = 1`, squares for `m = 2`.
pub fn structured_mesh_for(domain: &PolygonalDomain, spacing: f64, m: usize) -> Result<Mesh> {
    structured_mesh(domain, spacing, m)
}
