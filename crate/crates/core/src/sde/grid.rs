use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform time grid `t_k = t0 + k * dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    pub t0: T,
    pub t_end: T,
    pub n_steps: usize,
    pub dt: T,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t0: T, t_end: T, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidInput("n_steps must be at least 1".into()));
        }
        if !(t0 < t_end) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidInput(format!(
                "time grid needs finite t0 < t_end, got [{t0}, {t_end}]"
            )));
        }
        let dt = (t_end - t0) / T::from_usize_lossy(n_steps);
        Ok(Self { t0, t_end, n_steps, dt })
    }

    #[inline]
    pub fn time(&self, k: usize) -> T {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t0 + T::from_usize_lossy(k) * self.dt
        }
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// Uniform space grid with `n_space` intervals on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid<T> {
    pub x_min: T,
    pub x_max: T,
    pub n_space: usize,
}

impl<T: Real> SpaceGrid<T> {
    pub fn new(x_min: T, x_max: T, n_space: usize) -> Result<Self> {
        if n_space < 2 {
            return Err(Error::InvalidInput("n_space must be at least 2".into()));
        }
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "space grid needs finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self { x_min, x_max, n_space })
    }

    #[inline]
    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / T::from_usize_lossy(self.n_space)
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_space + 1
    }

    #[inline]
    pub fn node(&self, j: usize) -> T {
        if j == self.n_space {
            self.x_max
        } else {
            self.x_min + T::from_usize_lossy(j) * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n_nodes()).map(|j| self.node(j)).collect()
    }
}
