//! Sparse storage and a banded direct solver.
//!
//! Systems are reordered with reverse Cuthill-McKee and factored in band
//! storage without pivoting. That is safe for the matrices built here: their
//! Hermitian part is positive definite on the free dofs, so every leading
//! principal block is invertible.

use std::collections::VecDeque;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{LabError, Result};

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates in input order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        // stable sort keeps the summation order of duplicates fixed
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) out of range for n = {n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[C64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(ZERO)
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).fold(ZERO, |acc, (&j, a)| acc + a * x[j])
            })
            .collect()
    }

    /// `A^H x`.
    pub fn matvec_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.n];
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                out[j] += a.conj() * x[i];
            }
        }
        out
    }

    /// Principal submatrix on `keep` (ascending), renumbered `0..keep.len()`.
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut row_ptr = vec![0; keep.len() + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (k, &i) in keep.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                if map[j] != usize::MAX {
                    cols.push(map[j]);
                    vals.push(*a);
                }
            }
            row_ptr[k + 1] = cols.len();
        }
        // keep is ascending so the remapped columns stay sorted
        CsrMatrix { n: keep.len(), row_ptr, cols, vals }
    }

    /// Dense row-major copy, for small eigenvalue problems.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut d = vec![ZERO; self.n * self.n];
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                d[i * self.n + j] = *a;
            }
        }
        d
    }

    pub fn scale(&self, s: C64) -> CsrMatrix {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Coordinate text, one `row col re im` line per stored entry (1-based).
    pub fn to_coordinate_text(&self) -> String {
        let mut out = format!("% {} {} {}\n", self.n, self.n, self.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                writeln!(out, "{} {} {:e} {:e}", i + 1, j + 1, a.re, a.im).unwrap();
            }
        }
        out
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern; `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let bfs = |start: usize, seen: &mut [bool], order: &mut Vec<usize>| -> usize {
        // returns the last vertex reached, a pseudo-peripheral candidate
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut last = start;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            last = v;
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            nb.sort_by_key(|&w| (deg[w], w));
            for w in nb {
                seen[w] = true;
                queue.push_back(w);
            }
        }
        last
    };
    let mut placed = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for root in 0..n {
        if placed[root] {
            continue;
        }
        // two sweeps to move the start toward the periphery of this component
        let mut scratch = placed.clone();
        let mut tmp = Vec::new();
        let far = bfs(root, &mut scratch, &mut tmp);
        let mut comp = Vec::new();
        bfs(far, &mut placed, &mut comp);
        perm.extend(comp);
    }
    perm.reverse();
    perm
}

/// LU factors of a reordered matrix in band storage.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    bw: usize,
    band: Vec<C64>,
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let perm = rcm_ordering(a);
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut bw = 0;
        for i in 0..n {
            for &j in a.row(i).0 {
                bw = bw.max(inv[i].abs_diff(inv[j]));
            }
        }
        let w = 2 * bw + 1;
        let mut band = vec![ZERO; n * w];
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, val) in c.iter().zip(v) {
                let (r, s) = (inv[i], inv[j]);
                band[r * w + (s + bw - r)] = *val;
                scale = scale.max(val.norm());
            }
        }
        for k in 0..n {
            let piv = band[k * w + bw];
            if piv.norm() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                return Err(LabError::Singular(format!("zero pivot at step {k} of {n}")));
            }
            let end = (k + bw + 1).min(n);
            let inv_piv = piv.inv();
            for i in (k + 1)..end {
                let ik = i * w + (k + bw - i);
                let l = band[ik] * inv_piv;
                if l == ZERO {
                    continue;
                }
                band[ik] = l;
                // row i, columns k+1..end, and row k over the same columns
                let (head, tail) = band.split_at_mut(i * w);
                let krow = &head[k * w..(k + 1) * w];
                let irow = &mut tail[..w];
                for j in (k + 1)..end {
                    irow[j + bw - i] -= l * krow[j - k + bw];
                }
            }
        }
        Ok(Self { n, bw, band, perm, inv })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let (n, bw, w) = (self.n, self.bw, 2 * self.bw + 1);
        let mut y: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let row = &self.band[i * w..(i + 1) * w];
            let mut acc = y[i];
            for j in start..i {
                acc -= row[j + bw - i] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let end = (i + bw + 1).min(n);
            let row = &self.band[i * w..(i + 1) * w];
            let mut acc = y[i];
            for j in (i + 1)..end {
                acc -= row[j + bw - i] * y[j];
            }
            y[i] = acc / row[bw];
        }
        (0..n).map(|i| y[self.inv[i]]).collect()
    }
}

/// Factored principal subsystem of a sparse matrix, solved with one step of
/// iterative refinement.
#[derive(Debug, Clone)]
pub struct ReducedSolver {
    n_full: usize,
    keep: Vec<usize>,
    reduced: CsrMatrix,
    lu: BandLu,
}

impl ReducedSolver {
    pub fn new(a: &CsrMatrix, keep: Vec<usize>) -> Result<Self> {
        let reduced = a.principal_submatrix(&keep);
        let lu = BandLu::factor(&reduced)?;
        Ok(Self { n_full: a.n(), keep, reduced, lu })
    }

    pub fn keep(&self) -> &[usize] {
        &self.keep
    }

    /// Solves the rows in `keep` of `A x = b` with `x = 0` off `keep`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let rb: Vec<C64> = self.keep.iter().map(|&i| b[i]).collect();
        let mut x = self.lu.solve(&rb);
        let ax = self.reduced.matvec(&x);
        let r: Vec<C64> = rb.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let dx = self.lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        let mut full = vec![ZERO; self.n_full];
        for (k, &i) in self.keep.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    crate::sum::pairwise_sum_complex(&a.iter().zip(b).map(|(x, y)| x.conj() * y).collect::<Vec<_>>())
}

pub fn norm2(a: &[C64]) -> f64 {
    crate::sum::pairwise_sum(&a.iter().map(|x| x.norm_sqr()).collect::<Vec<_>>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_system(n: usize, seed: u64) -> CsrMatrix {
        // 2-D grid Laplacian shifted by a random skew part: Hermitian part is SPD
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let side = (n as f64).sqrt() as usize;
        let mut t = Vec::new();
        let id = |i: usize, j: usize| j * side + i;
        for j in 0..side {
            for i in 0..side {
                t.push((id(i, j), id(i, j), c(4.5, 0.0)));
                let mut nb = Vec::new();
                if i + 1 < side {
                    nb.push(id(i + 1, j));
                }
                if j + 1 < side {
                    nb.push(id(i, j + 1));
                }
                for k in nb {
                    let skew = c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                    t.push((id(i, j), k, c(-1.0, 0.0) + skew));
                    t.push((k, id(i, j), c(-1.0, 0.0) - skew.conj()));
                }
            }
        }
        CsrMatrix::from_triplets(side * side, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 1, c(1.0, 0.0)), (0, 1, c(2.0, 0.0)), (1, 0, c(0.0, 1.0))]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), c(3.0, 0.0));
        assert_eq!(a.get(1, 1), ZERO);
    }

    #[test]
    fn band_lu_solves_grid_system() {
        let a = random_system(400, 3);
        let lu = BandLu::factor(&a).unwrap();
        assert!(lu.bandwidth() <= 25);
        let x: Vec<C64> = (0..400).map(|i| c((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let b = a.matvec(&x);
        let y = lu.solve(&b);
        let err: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, c(1.0, 0.0)), (0, 1, c(1.0, 0.0)), (1, 0, c(1.0, 0.0)), (1, 1, c(1.0, 0.0))]);
        assert!(matches!(BandLu::factor(&a), Err(LabError::Singular(_))));
    }

    #[test]
    fn reduced_solver_leaves_dropped_rows_zero() {
        let a = random_system(100, 5);
        let keep: Vec<usize> = (0..100).filter(|i| i % 7 != 0).collect();
        let s = ReducedSolver::new(&a, keep.clone()).unwrap();
        let b: Vec<C64> = (0..100).map(|i| c(1.0, i as f64 * 0.01)).collect();
        let x = s.solve(&b);
        let ax = a.matvec(&x);
        for i in 0..100 {
            if i % 7 == 0 {
                assert_eq!(x[i], ZERO);
            } else {
                assert!((ax[i] - b[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = random_system(144, 1);
        let mut p = rcm_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, (0..144).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn adjoint_matvec_matches_dense(seed in 0u64..1000) {
            let a = random_system(16, seed);
            let x: Vec<C64> = (0..16).map(|i| c(i as f64, 1.0)).collect();
            let y: Vec<C64> = (0..16).map(|i| c(1.0, -(i as f64))).collect();
            // <A x, y> = <x, A^H y>
            let lhs = dot(&a.matvec(&x), &y);
            let rhs = dot(&x, &a.matvec_adjoint(&y));
            prop_assert!((lhs - rhs).norm() < 1e-10);
        }
    }
}
