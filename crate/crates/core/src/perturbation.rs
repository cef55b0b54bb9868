//! The L-infinity perturbation series, its constant bounds, the reduction to
//! homogeneous boundary data, the converse reduction through the Newton
//! potential, and the adjoint duality experiment.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::coefficients::{sup_distance, CoefficientTensor};
use crate::error::{LabError, Result};
use crate::fem::{FeSolution, FeSpace, Gauge};
use crate::field::{ArrayField, GradientArray};
use crate::norms::{cube_gaussian_field, operator_norm_probe, smooth_field, trial_rng, NormParams, WhitneyNorm};
use crate::solver::{
    assemble_load, extract_neumann_data, residual_with, BoundaryFunctional, BoundaryKind, BvpSolver, NewtonPotential,
};
use crate::sum::ordered_map;

type C64 = Complex64;
const ONE: C64 = C64::new(1.0, 0.0);

/// `H -> D^m u` for a factored solver, on its assembly samples.
pub fn gradient_map(solver: &BvpSolver) -> impl Fn(&GradientArray) -> Result<GradientArray> + Sync + Send + '_ {
    move |h| Ok(solver.solve_array(h)?.gradient(solver.space().assembly_samples()))
}

/// Predicted constant of the perturbed problem.
pub fn c2_predicted(c0: f64, eps: f64, p: f64) -> Option<f64> {
    if p >= 1.0 {
        let d = 1.0 - c0 * eps;
        (d > 0.0).then(|| c0 / d)
    } else {
        let d = 1.0 - (c0 * eps).powf(p);
        (d > 0.0).then(|| (c0.powf(p) / d).powf(1.0 / p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub tol: f64,
    pub max_terms: usize,
    pub probe_trials: usize,
    pub seed: u64,
    /// Consecutive non-decaying ratios treated as divergence.
    pub divergence_window: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_terms: 200, probe_trials: 32, seed: 1, divergence_window: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationTrace {
    pub term_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    pub epsilon: f64,
    /// Probe estimate before the series ran.
    pub c0_hat_pre: f64,
    /// Probe estimate including the series data fields.
    pub c0_hat: f64,
    pub c2_predicted: Option<f64>,
    pub c2_observed: f64,
    pub converged: bool,
    pub terms_used: usize,
    pub p: f64,
    pub s: f64,
    /// Relative Galerkin residual of the sum against the perturbed operator.
    pub residual_b: f64,
}

impl PerturbationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,term_norm,ratio\n");
        for (j, t) in self.term_norms.iter().enumerate() {
            let r = if j == 0 { String::new() } else { format!("{:.12e}", self.ratios[j - 1]) };
            let _ = writeln!(out, "{j},{t:.12e},{r}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("null".to_string(), |x| format!("{x:.12e}"));
        format!(
            "{{\"p\":{},\"s\":{},\"epsilon\":{:.12e},\"C0_hat_pre\":{:.12e},\"C0_hat\":{:.12e},\"C2_predicted\":{},\"C2_observed\":{:.12e},\"converged\":{},\"terms_used\":{}}}",
            self.p,
            self.s,
            self.epsilon,
            self.c0_hat_pre,
            self.c0_hat,
            opt(self.c2_predicted),
            self.c2_observed,
            self.converged,
            self.terms_used
        )
    }

    /// Largest successive ratio.
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Sums `u = sum_j u_j` with `u_0` the `A`-solution for `H` and `u_{j+1}` the
/// `A`-solution for `(A - B) D^m u_j`, approximating the `B`-solution.
pub fn perturb_solve(
    a: &BvpSolver,
    b: &CoefficientTensor,
    h: &GradientArray,
    wn: &WhitneyNorm,
    params: &NormParams,
    opts: &SeriesOptions,
) -> Result<(FeSolution, PerturbationTrace)> {
    let space = a.space();
    let quad = space.assembly_samples();
    if !std::sync::Arc::ptr_eq(wn.samples(), quad) || !std::sync::Arc::ptr_eq(h.samples(), quad) {
        return Err(LabError::ShapeMismatch {
            expected: "data and norm on the assembly samples".into(),
            found: "other samples".into(),
        });
    }
    let diff = a.tensor().difference(b)?;
    let eps = sup_distance(a.tensor(), b, &quad.points)?;
    let t = gradient_map(a);
    let pre = operator_norm_probe(&t, wn, params, space.width(), opts.probe_trials, opts.seed, std::slice::from_ref(h))?;
    let p = params.p();
    let guard = if p >= 1.0 { pre.c0_hat * eps } else { (pre.c0_hat * eps).powf(p) };
    if guard >= 1.0 {
        return Err(LabError::PerturbationTooLarge { c0_hat: pre.c0_hat, epsilon: eps, product: pre.c0_hat * eps });
    }
    let h_norm = wn.value(h, params)?;
    let mut c0 = pre.c0_hat;
    let mut u = a.solve_array(h)?;
    let mut grad = u.gradient(quad);
    let mut term_norms = vec![wn.value(&grad, params)?];
    let mut ratios = Vec::new();
    if h_norm > 0.0 {
        c0 = c0.max(term_norms[0] / h_norm);
    }
    let mut sum = u.clone();
    let mut converged = term_norms[0] == 0.0 || eps == 0.0;
    let mut stalled = 0;
    while !converged && term_norms.len() < opts.max_terms {
        let data = grad.apply_tensor(&diff)?;
        let data_norm = wn.value(&data, params)?;
        u = a.solve_array(&data)?;
        grad = u.gradient(quad);
        let tn = wn.value(&grad, params)?;
        if data_norm > 0.0 {
            c0 = c0.max(tn / data_norm);
        }
        let prev = *term_norms.last().unwrap();
        let ratio = if prev > 0.0 { tn / prev } else { 0.0 };
        ratios.push(ratio);
        term_norms.push(tn);
        sum = sum.combine(ONE, &u, ONE);
        if tn <= opts.tol * term_norms[0] {
            converged = true;
        }
        stalled = if ratio >= 1.0 { stalled + 1 } else { 0 };
        if stalled >= opts.divergence_window {
            return Err(LabError::Diverging(ratios));
        }
    }
    if a.kind() == BoundaryKind::Neumann {
        sum.gauge = Gauge::KernelRemoved;
    }
    let total = wn.value(&sum.gradient(quad), params)?;
    let c2_observed = if h_norm > 0.0 { total / h_norm } else { 0.0 };
    let hf = ArrayOnSamples(h);
    let residual_b = residual_with(b, &sum, &hf, None, a.kind())?;
    let trace = PerturbationTrace {
        terms_used: term_norms.len(),
        term_norms,
        ratios,
        epsilon: eps,
        c0_hat_pre: pre.c0_hat,
        c0_hat: c0,
        c2_predicted: c2_predicted(c0, eps, p),
        c2_observed,
        converged,
        p,
        s: params.s(),
        residual_b,
    };
    Ok((sum, trace))
}

/// A sampled array viewed as a field on its own samples (nearest sample).
struct ArrayOnSamples<'a>(&'a GradientArray);

impl ArrayField for ArrayOnSamples<'_> {
    fn width(&self) -> usize {
        self.0.width()
    }

    fn eval(&self, x: crate::geometry::Point2, out: &mut [C64]) {
        let s = self.0.samples();
        let i = s
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist(x).total_cmp(&b.1.dist(x)))
            .map(|(i, _)| i)
            .unwrap();
        out.copy_from_slice(self.0.at(i));
    }

    fn sample(&self, samples: &std::sync::Arc<crate::field::Samples>) -> GradientArray {
        if std::sync::Arc::ptr_eq(samples, self.0.samples()) {
            return self.0.clone();
        }
        let w = self.width();
        let rows = ordered_map(samples.len(), |i| {
            let mut out = vec![C64::new(0.0, 0.0); w];
            self.eval(samples.points[i], &mut out);
            out
        });
        GradientArray::from_values(samples.clone(), w, rows.concat()).unwrap()
    }
}

/// View of a sampled array as an [`ArrayField`]; exact on its own samples.
pub fn as_field(h: &GradientArray) -> impl ArrayField + '_ {
    ArrayOnSamples(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2Report {
    pub observed: f64,
    pub predicted: Option<f64>,
    pub slack: f64,
    pub pass: bool,
}

pub fn verify_c2_bound(trace: &PerturbationTrace, slack: f64) -> C2Report {
    let pass = trace.converged && trace.c2_predicted.is_some_and(|c| trace.c2_observed <= c * (1.0 + slack));
    C2Report { observed: trace.c2_observed, predicted: trace.c2_predicted, slack, pass }
}

/// Dirichlet: `u = v + F` with `v` the homogeneous solution for `H - A D^m F`.
/// Neumann: the data functional `g` is added to the load.
pub fn reduce_to_homogeneous_boundary(
    solver: &BvpSolver,
    h: &GradientArray,
    extension: &FeSolution,
    g: Option<&BoundaryFunctional>,
) -> Result<(FeSolution, f64)> {
    let space = solver.space();
    let quad = space.assembly_samples();
    match solver.kind() {
        BoundaryKind::Dirichlet => {
            let af = extension.gradient(quad).apply_tensor(solver.tensor())?;
            let phi = h.combine(ONE, &af, -ONE)?;
            let v = solver.solve_array(&phi)?;
            let u = v.combine(ONE, extension, ONE);
            let r = residual_with(solver.tensor(), &u, &as_field(h), None, BoundaryKind::Dirichlet)?;
            Ok((u, r))
        }
        BoundaryKind::Neumann => {
            let mut b = assemble_load(space, h)?;
            if let Some(g) = g {
                b.iter_mut().zip(g.to_full(space)).for_each(|(x, y)| *x += y);
            }
            let u = solver.solve_rhs(&b)?;
            let r = residual_with(solver.tensor(), &u, &as_field(h), g, BoundaryKind::Neumann)?;
            Ok((u, r))
        }
    }
}

/// Boundary data for [`reduce_via_newton`].
#[derive(Debug, Clone)]
pub enum BoundaryData<'a> {
    /// Dirichlet trace given by the boundary dofs of an FE function.
    Dirichlet(&'a FeSolution),
    Neumann(&'a BoundaryFunctional),
}

#[derive(Debug, Clone)]
pub struct NewtonReduction {
    pub u: FeSolution,
    pub newton: FeSolution,
    pub correction: FeSolution,
    pub residual: f64,
    pub truncation: Option<f64>,
}

/// `u = Pi H - v` where `v` is `L`-harmonic with boundary values those of
/// `Pi H` minus the prescribed data.
pub fn reduce_via_newton(
    np: &NewtonPotential,
    omega: &BvpSolver,
    h: &dyn ArrayField,
    data: BoundaryData<'_>,
    truncation: Option<f64>,
) -> Result<NewtonReduction> {
    let space = omega.space();
    let quad = space.assembly_samples();
    let w = np.restrict(&np.apply(h)?);
    let hs = h.sample(quad);
    let zero_h = GradientArray::zeros(quad.clone(), space.width());
    let (correction, kind) = match (&data, omega.kind()) {
        (BoundaryData::Dirichlet(f), BoundaryKind::Dirichlet) => {
            let mut ext = vec![C64::new(0.0, 0.0); space.n_dofs()];
            for i in space.boundary_dofs() {
                ext[i] = w.dofs[i] - f.dofs[i];
            }
            let ext = FeSolution::new(space.clone(), ext);
            (reduce_to_homogeneous_boundary(omega, &zero_h, &ext, None)?.0, BoundaryKind::Dirichlet)
        }
        (BoundaryData::Neumann(g), BoundaryKind::Neumann) => {
            let mw = extract_neumann_data(omega.tensor(), &w, h)?;
            let diff = BoundaryFunctional { values: mw.values.iter().zip(&g.values).map(|(a, b)| a - b).collect() };
            (reduce_to_homogeneous_boundary(omega, &zero_h, &FeSolution::zero(space.clone()), Some(&diff))?.0, BoundaryKind::Neumann)
        }
        _ => return Err(LabError::InvalidParameter("boundary data kind does not match the solver".into())),
    };
    let mut u = w.combine(ONE, &correction, -ONE);
    let g = match data {
        BoundaryData::Neumann(g) => {
            space.remove_kernel(&mut u.dofs);
            u.gauge = Gauge::KernelRemoved;
            Some(g)
        }
        BoundaryData::Dirichlet(_) => None,
    };
    let residual = residual_with(omega.tensor(), &u, &as_field(&hs), g, kind)?;
    Ok(NewtonReduction { u, newton: w, correction, residual, truncation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub trials: usize,
    pub max_pairing_error: f64,
    pub c0_hat: f64,
    pub c0_star_hat: f64,
    /// `c0_star_hat / (C1 c0_hat)` with `C1 = 1`.
    pub ratio: f64,
}

/// Pairing identity `<H, D^m v> = <D^m u, Phi>` on random data, and the two
/// operator-norm probes at `(p, s)` and at the dual exponents.
pub fn duality_experiment(
    a: &BvpSolver,
    a_star: &BvpSolver,
    wn: &WhitneyNorm,
    params: &NormParams,
    trials: usize,
    probe_trials: usize,
    seed: u64,
) -> Result<DualityReport> {
    let p = params.p();
    if !(1.0..f64::INFINITY).contains(&p) {
        return Err(LabError::InvalidParameter(format!("duality experiment needs 1 <= p < inf, got {p}")));
    }
    let space: &FeSpace = a.space();
    let width = space.width();
    let errors = ordered_map(trials, |t| -> Result<f64> {
        let mut rng = trial_rng(seed ^ 0xD0A1, t as u64);
        let h = cube_gaussian_field(wn, width, &mut rng);
        let phi = smooth_field(wn.samples(), 3, width, &mut rng);
        let u = a.solve_array(&h)?;
        let v = a_star.solve_array(&phi)?;
        let q = space.assembly_samples();
        let lhs = h.pairing(&v.gradient(q))?;
        let rhs = u.gradient(q).pairing(&phi)?;
        let scale = lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
        Ok((lhs - rhs).norm() / scale)
    });
    let mut max_err: f64 = 0.0;
    for e in errors {
        max_err = max_err.max(e?);
    }
    let dual = params.dual();
    let t = gradient_map(a);
    let ts = gradient_map(a_star);
    let first = operator_norm_probe(&t, wn, params, width, probe_trials, seed, &[])?;
    let cross = match &first.best {
        Some(f) => vec![wn.duality_map(&t(f)?, params)?],
        None => vec![],
    };
    let star = operator_norm_probe(&ts, wn, &dual, width, probe_trials, seed.wrapping_add(1), &cross)?;
    let back = match (&star.best, dual.p().is_finite() && dual.p() >= 1.0) {
        (Some(g), true) => vec![wn.duality_map(&ts(g)?, &dual)?],
        _ => vec![],
    };
    let again = operator_norm_probe(&t, wn, params, width, 1, seed.wrapping_add(2), &back)?;
    let c0 = first.c0_hat.max(again.c0_hat);
    Ok(DualityReport {
        trials,
        max_pairing_error: max_err,
        c0_hat: c0,
        c0_star_hat: star.c0_hat,
        ratio: if c0 > 0.0 { star.c0_hat / c0 } else { 0.0 },
    })
}
