//! Penalized BSDE solvers: least-squares Monte Carlo along simulated paths and
//! exact dynamic programming on the chain.

mod basis;
mod chain;
mod lsmc;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

pub use basis::{BasisFamily, RegressionBasis};
pub use chain::{chain_accumulation, solve_penalized_chain, solve_projected_chain, CHAIN_FIXED_POINT_TOL};
pub use lsmc::{
    solve_penalized_lsmc, IncreasingPart, LsmcOptions, PenaltyTreatment,
    EXPLICIT_STIFFNESS_LIMIT, REGRESSION_BLOCK,
};

/// Pathwise estimates of `(Y, Z, A)` for one penalization level.
///
/// Arrays are stored time-major: `y[k * n_paths + p]`, `a[k * n_paths + p]`,
/// `phi[k * n_paths + p]` and `z[(k * n_paths + p) * dim + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedBsdeSolution<T> {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dim: usize,
    pub y: Vec<T>,
    pub z: Vec<T>,
    /// Cumulative increasing part, `a[0 * n_paths + p] = 0`.
    pub a: Vec<T>,
    /// Constraint value `Phi(t_k, X_k, Y_k, Z_k)` at each visited point.
    pub phi: Vec<T>,
    pub alpha: T,
    pub y0: T,
    pub y0_stderr: T,
}

impl<T: Real> PenalizedBsdeSolution<T> {
    #[inline]
    pub fn y_at(&self, p: usize, k: usize) -> T {
        self.y[k * self.n_paths + p]
    }

    #[inline]
    pub fn a_at(&self, p: usize, k: usize) -> T {
        self.a[k * self.n_paths + p]
    }

    #[inline]
    pub fn phi_at(&self, p: usize, k: usize) -> T {
        self.phi[k * self.n_paths + p]
    }

    #[inline]
    pub fn z_at(&self, p: usize, k: usize) -> &[T] {
        let base = (k * self.n_paths + p) * self.dim;
        &self.z[base..base + self.dim]
    }

    /// True when every path's `A` starts at zero and never decreases.
    pub fn a_is_nondecreasing(&self) -> bool {
        let np = self.n_paths;
        (0..np).all(|p| {
            self.a[p] == T::zero() && (0..self.n_steps).all(|k| self.a_at(p, k + 1) >= self.a_at(p, k))
        })
    }
}

/// Summary of the cumulative penalization process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncreasingPartStats {
    pub mean_total: f64,
    pub max_total: f64,
    /// Fraction of visited `(p, k)` with `Phi^- > 0`.
    pub fraction_active: f64,
}

pub fn increasing_part_stats<T: Real>(sol: &PenalizedBsdeSolution<T>) -> IncreasingPartStats {
    let np = sol.n_paths;
    let last = &sol.a[sol.n_steps * np..];
    let mean_total = last.iter().map(|v| v.as_f64()).sum::<f64>() / np as f64;
    let max_total = last.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let active = sol.phi.iter().filter(|&&v| v < T::zero()).count();
    let fraction_active = if sol.phi.is_empty() {
        0.0
    } else {
        active as f64 / sol.phi.len() as f64
    };
    IncreasingPartStats {
        mean_total,
        max_total,
        fraction_active,
    }
}
