//! Linear solvers for the reduced stiffness system.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Par, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Direct in 2D, PCG in 3D.
    #[default]
    Auto,
    Direct,
    Pcg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub kind: SolverKind,
    /// Relative residual target of the iterative solver.
    pub tolerance: f64,
    /// Iteration cap as a multiple of `sqrt(n)`.
    pub max_iter_factor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { kind: SolverKind::Auto, tolerance: 1e-8, max_iter_factor: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `||K u - f|| / ||f||` of the returned solution.
    pub relative_residual: f64,
    /// Diagonal shift that made the incomplete factorization succeed.
    pub shift: f64,
}

pub enum LinearSolver {
    Direct(DirectSolver),
    Pcg(PcgSolver),
}

impl LinearSolver {
    pub fn new(pattern: &CsrMatrix, dim: usize, settings: &SolverSettings) -> Result<Self> {
        let direct = match settings.kind {
            SolverKind::Auto => dim == 2,
            SolverKind::Direct => true,
            SolverKind::Pcg => false,
        };
        Ok(if direct {
            LinearSolver::Direct(DirectSolver::new(pattern)?)
        } else {
            LinearSolver::Pcg(PcgSolver::new(settings.tolerance, settings.max_iter_factor))
        })
    }

    pub fn solve(&self, k: &CsrMatrix, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        match self {
            LinearSolver::Direct(s) => s.solve(k, rhs),
            LinearSolver::Pcg(s) => s.solve(k, rhs),
        }
    }
}

/// Single-threaded or rayon-backed kernels for the direct factorization.
pub fn set_direct_parallelism(serial: bool) {
    faer::set_global_parallelism(if serial { Par::Seq } else { Par::rayon(0) });
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fixed-chunk reduction so the result does not depend on the thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(4096)
        .zip(b.par_chunks(4096))
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    partial.iter().sum()
}

fn relative_residual(k: &CsrMatrix, u: &[f64], rhs: &[f64]) -> f64 {
    let ku = k.mul_vec(u);
    let r: Vec<f64> = ku.iter().zip(rhs).map(|(a, b)| b - a).collect();
    let b = norm(rhs);
    if b == 0.0 {
        norm(&r)
    } else {
        norm(&r) / b
    }
}

/// Residual above which a completed factorization is treated as singular.
const SINGULAR_RESIDUAL: f64 = 1e-6;

/// Sparse Cholesky with the symbolic analysis done once per pattern. The
/// symmetric CSR storage is read as CSC, lower triangle only.
pub struct DirectSolver {
    col_ptr: Vec<u32>,
    symbolic: SymbolicLlt<u32>,
}

impl DirectSolver {
    pub fn new(pattern: &CsrMatrix) -> Result<Self> {
        if pattern.nnz() > u32::MAX as usize {
            return Err(Error::Analysis("stiffness matrix too large for 32-bit indices".into()));
        }
        let col_ptr: Vec<u32> = pattern.row_ptr.iter().map(|&p| p as u32).collect();
        let sym = SymbolicSparseColMatRef::new_checked(pattern.nrows, pattern.ncols, &col_ptr, None, &pattern.col_idx);
        let symbolic = SymbolicLlt::try_new(sym, Side::Lower)
            .map_err(|e| Error::Analysis(format!("symbolic factorization failed: {e:?}")))?;
        Ok(Self { col_ptr, symbolic })
    }

    pub fn solve(&self, k: &CsrMatrix, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let sym = SymbolicSparseColMatRef::new_checked(k.nrows, k.ncols, &self.col_ptr, None, &k.col_idx);
        let mat = SparseColMatRef::new(sym, &k.values);
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower)
            .map_err(|e| Error::Analysis(format!("stiffness matrix is not positive definite: {e:?}")))?;
        let mut u = rhs.to_vec();
        llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut u, k.nrows, 1));
        let relative_residual = relative_residual(k, &u, rhs);
        if !(relative_residual <= SINGULAR_RESIDUAL) {
            return Err(Error::Analysis(format!(
                "stiffness matrix is numerically singular (relative residual {relative_residual:.3e})"
            )));
        }
        Ok((u, SolveStats { iterations: 1, relative_residual, shift: 0.0 }))
    }
}

/// Conjugate gradients on the Jacobi-scaled system, preconditioned by a
/// zero fill-in incomplete Cholesky factor.
pub struct PcgSolver {
    tolerance: f64,
    max_iter_factor: f64,
}

/// Lower-triangular factor in CSR, diagonal stored last in each row.
struct IncompleteCholesky {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl IncompleteCholesky {
    /// Factorizes `a + shift I`. Returns `None` on a non-positive pivot.
    fn factor(a: &CsrMatrix, shift: f64) -> Option<Self> {
        let n = a.nrows;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if c as usize <= i {
                    col_idx.push(c);
                    values.push(if c as usize == i { v + shift } else { v });
                }
            }
            row_ptr.push(col_idx.len());
        }
        for i in 0..n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            if end == start || col_idx[end - 1] as usize != i {
                return None;
            }
            for p in start..end - 1 {
                let k = col_idx[p] as usize;
                // sum over common columns j < k of L[i][j] L[k][j]
                let (ks, ke) = (row_ptr[k], row_ptr[k + 1] - 1);
                let (mut q, mut r) = (start, ks);
                let mut s = 0.0;
                while q < p && r < ke {
                    match col_idx[q].cmp(&col_idx[r]) {
                        std::cmp::Ordering::Less => q += 1,
                        std::cmp::Ordering::Greater => r += 1,
                        std::cmp::Ordering::Equal => {
                            s += values[q] * values[r];
                            q += 1;
                            r += 1;
                        }
                    }
                }
                values[p] = (values[p] - s) / values[ke];
            }
            let s: f64 = values[start..end - 1].iter().map(|v| v * v).sum();
            let d = values[end - 1] - s;
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            values[end - 1] = d.sqrt();
        }
        Some(Self { row_ptr, col_idx, values })
    }

    /// Solves `L L^T z = r` in place.
    fn apply(&self, z: &mut [f64]) {
        let n = z.len();
        for i in 0..n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1] - 1);
            let mut acc = z[i];
            for p in s..e {
                acc -= self.values[p] * z[self.col_idx[p] as usize];
            }
            z[i] = acc / self.values[e];
        }
        for i in (0..n).rev() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1] - 1);
            z[i] /= self.values[e];
            let zi = z[i];
            for p in s..e {
                z[self.col_idx[p] as usize] -= self.values[p] * zi;
            }
        }
    }
}

impl PcgSolver {
    pub fn new(tolerance: f64, max_iter_factor: f64) -> Self {
        Self { tolerance, max_iter_factor }
    }

    pub fn solve(&self, k: &CsrMatrix, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let n = k.nrows;
        let bnorm = norm(rhs);
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], SolveStats::default()));
        }
        let mut scale = vec![0.0; n];
        for (i, s) in scale.iter_mut().enumerate() {
            let d = k.get(i, i);
            if !(d > 0.0) {
                return Err(Error::Analysis(format!("non-positive stiffness diagonal at reduced DOF {i}")));
            }
            *s = 1.0 / d.sqrt();
        }
        let mut a = k.clone();
        for i in 0..n {
            let (s, e) = (a.row_ptr[i], a.row_ptr[i + 1]);
            for p in s..e {
                a.values[p] *= scale[i] * scale[a.col_idx[p] as usize];
            }
        }
        let mut shift = 0.0;
        let ic = loop {
            if let Some(f) = IncompleteCholesky::factor(&a, shift) {
                break f;
            }
            shift = if shift == 0.0 { 1e-3 } else { shift * 2.0 };
            if shift > 1.0 {
                return Err(Error::Analysis("incomplete Cholesky failed for every diagonal shift".into()));
            }
            log::debug!("incomplete Cholesky breakdown, retrying with shift {shift}");
        };

        // Residual of the scaled system relates to the true one by r = r_hat / scale.
        let true_norm = |r: &[f64]| r.iter().zip(&scale).map(|(v, s)| (v / s).powi(2)).sum::<f64>().sqrt();
        let max_iter = (self.max_iter_factor * (n as f64).sqrt()).ceil() as usize;
        let mut y = vec![0.0; n];
        let mut r: Vec<f64> = rhs.iter().zip(&scale).map(|(b, s)| b * s).collect();
        let mut z = r.clone();
        ic.apply(&mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut rel = true_norm(&r) / bnorm;
        let mut iterations = 0;
        while rel > self.tolerance {
            if iterations >= max_iter {
                return Err(Error::Analysis(format!(
                    "PCG did not converge in {max_iter} iterations (relative residual {rel:.3e})"
                )));
            }
            a.mul_vec_into(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            y.par_iter_mut().zip(&p).for_each(|(y, p)| *y += alpha * p);
            r.par_iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
            z.copy_from_slice(&r);
            ic.apply(&mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
            rel = true_norm(&r) / bnorm;
            iterations += 1;
        }
        let u: Vec<f64> = y.iter().zip(&scale).map(|(y, s)| y * s).collect();
        let relative_residual = relative_residual(k, &u, rhs);
        Ok((u, SolveStats { iterations, relative_residual, shift }))
    }
}
