//! Small dense and banded solvers used by the regression and PDE code.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tridiagonal matrix stored by diagonals; `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![T::zero(); n],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `out = self * v`.
    pub fn apply(&self, v: &[T], out: &mut [T]) {
        let n = self.len();
        for i in 0..n {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.lower[i] * v[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * v[i + 1];
            }
            out[i] = acc;
        }
    }

    /// Solve `self * x = rhs` by the Thomas algorithm.
    ///
    /// No pivoting; intended for the diagonally dominant systems produced by
    /// implicit time stepping. `scratch` must have the same length.
    pub fn solve_into(&self, rhs: &[T], x: &mut [T], scratch: &mut [T]) -> Result<()> {
        let n = self.len();
        if rhs.len() != n || x.len() != n || scratch.len() != n {
            return Err(Error::Shape("tridiagonal solve: length mismatch".into()));
        }
        let tiny = T::min_positive_value();
        let mut denom = self.diag[0];
        if denom.abs() <= tiny {
            return Err(Error::Stability("zero pivot in tridiagonal solve".into()));
        }
        x[0] = rhs[0] / denom;
        for i in 1..n {
            scratch[i] = self.upper[i - 1] / denom;
            denom = self.diag[i] - self.lower[i] * scratch[i];
            if denom.abs() <= tiny {
                return Err(Error::Stability("zero pivot in tridiagonal solve".into()));
            }
            x[i] = (rhs[i] - self.lower[i] * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= scratch[i + 1] * next;
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.len();
        let mut x = vec![T::zero(); n];
        let mut scratch = vec![T::zero(); n];
        self.solve_into(rhs, &mut x, &mut scratch)?;
        Ok(x)
    }
}

/// Relative ridge added to the Gram matrix when the plain Cholesky fails.
pub const RIDGE_FACTOR: f64 = 1e-10;

/// Solve the symmetric positive (semi)definite system `gram * beta = rhs`
/// for several right-hand sides. `gram` is `p x p` row-major, `rhs` holds
/// `n_rhs` columns of length `p` stored one after another.
///
/// Falls back to `gram + RIDGE_FACTOR * trace * I` when a pivot collapses;
/// returns `None` for an all-zero Gram matrix or if the ridge also fails.
pub fn solve_normal_equations<T: Real>(gram: &[T], rhs: &[T], p: usize) -> Option<Vec<T>> {
    if let Some(l) = cholesky(gram, p, T::zero()) {
        return Some(cholesky_solve(&l, rhs, p));
    }
    let trace = (0..p).fold(T::zero(), |acc, i| acc + gram[i * p + i]);
    if !(trace > T::zero()) {
        return None;
    }
    let ridge = T::lit(RIDGE_FACTOR) * trace;
    cholesky(gram, p, ridge).map(|l| cholesky_solve(&l, rhs, p))
}

fn cholesky<T: Real>(a: &[T], p: usize, ridge: T) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); p * p];
    let max_diag = (0..p).fold(T::zero(), |m, i| m.max(a[i * p + i].abs()));
    let floor = max_diag * T::epsilon() * T::lit(64.0);
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            if i == j {
                s += ridge;
            }
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > floor) {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve<T: Real>(l: &[T], rhs: &[T], p: usize) -> Vec<T> {
    let n_rhs = rhs.len() / p;
    let mut out = rhs.to_vec();
    for c in 0..n_rhs {
        let x = &mut out[c * p..(c + 1) * p];
        for i in 0..p {
            let mut s = x[i];
            for k in 0..i {
                s -= l[i * p + k] * x[k];
            }
            x[i] = s / l[i * p + i];
        }
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in i + 1..p {
                s -= l[k * p + i] * x[k];
            }
            x[i] = s / l[i * p + i];
        }
    }
    out
}
