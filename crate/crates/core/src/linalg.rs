//! Small dense linear-algebra kernels shared by the estimator and tuner.
//!
//! `nalgebra` supplies storage, QR and SVD. Cholesky is done here because the
//! callers need the failing pivot index and a pivot tolerance relative to the
//! largest diagonal entry.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot tolerance: a pivot must exceed this times the largest diagonal entry.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorises a symmetric matrix, reading only its lower triangle.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::param(format!(
                "Cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
        let tol = PIVOT_TOLERANCE * max_diag;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let s = a[(i, j)] - dot(ri, rj);
                if i == j {
                    if !(s > tol) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            index: i,
                            pivot: s,
                            tolerance: tol,
                        });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let s = x[i] - dot(&self.l[i * n..i * n + i], &x[..i]);
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.l[k * n + i] * x[k]).sum();
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
        x
    }

    pub fn factor(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.l)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves a symmetric positive-definite system after symmetric diagonal
/// (Jacobi) equilibration, so badly scaled rows of a decay-weighted penalty do
/// not trip the relative pivot tolerance.
pub fn solve_spd(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = a[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                index: i,
                pivot: d,
                tolerance: 0.0,
            });
        }
        scale.push(d.sqrt().recip());
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let rhs: Vec<f64> = b.iter().zip(&scale).map(|(v, s)| v * s).collect();
    let z = Cholesky::new(&scaled)?.solve(&rhs);
    Ok(z.iter().zip(&scale).map(|(v, s)| v * s).collect())
}

/// Least squares `min ‖A x − b‖` by Householder QR. Fails when a diagonal
/// entry of `R` falls below `rel_tol` times the norm of its column of `A`,
/// which is insensitive to column scaling.
pub fn lstsq_qr(a: DMatrix<f64>, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Singular(format!(
            "least squares with {m} rows cannot determine {n} unknowns"
        )));
    }
    let col_norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let qr = a.qr();
    let r = qr.r();
    let small = (0..n)
        .filter(|&i| !(r[(i, i)].abs() > rel_tol * col_norms[i]))
        .count();
    if small > 0 {
        return Err(Error::Singular(format!(
            "triangular factor has {small} negligible pivots out of {n}"
        )));
    }
    let mut qtb = DVector::from_column_slice(b);
    qr.q_tr_mul(&mut qtb);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for k in i + 1..n {
            s -= r[(i, k)] * x[k];
        }
        x[i] = s / r[(i, i)];
    }
    Ok(x)
}

/// Numerical rank of `a` from its singular values.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
