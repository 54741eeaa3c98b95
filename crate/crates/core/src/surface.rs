//! Grid functions `u(t_i, x_j)` produced by the deterministic solvers.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A value surface on a rectangular 1D space-time grid.
///
/// `values` is row-major with one row per time level: `values[i * xs.len() + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface<T> {
    pub times: Vec<T>,
    pub xs: Vec<T>,
    pub values: Vec<T>,
    /// Boundary treatment the surface was computed with, e.g. `linear_extrapolation`.
    pub boundary: String,
    /// Penalization level, `None` for projected (reflected) solutions.
    pub alpha: Option<f64>,
    pub method: String,
    pub problem: String,
}

/// Descriptive metadata written next to a surface CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetadata {
    pub problem: String,
    pub method: String,
    pub alpha: Option<f64>,
    pub boundary: String,
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_space: usize,
}

impl<T: Real> ValueSurface<T> {
    pub fn new(times: Vec<T>, xs: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() < 2 || xs.len() < 2 {
            return Err(Error::Shape("a surface needs at least 2 times and 2 nodes".into()));
        }
        if values.len() != times.len() * xs.len() {
            return Err(Error::Shape(format!(
                "surface has {} values for a {}x{} grid",
                values.len(),
                times.len(),
                xs.len()
            )));
        }
        Ok(Self {
            times,
            xs,
            values,
            boundary: String::new(),
            alpha: None,
            method: String::new(),
            problem: String::new(),
        })
    }

    pub fn tagged(mut self, problem: &str, method: &str, boundary: &str, alpha: Option<f64>) -> Self {
        self.problem = problem.to_string();
        self.method = method.to_string();
        self.boundary = boundary.to_string();
        self.alpha = alpha;
        self
    }

    #[inline]
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.xs.len()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.xs.len() + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let n = self.xs.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Quadratic Lagrange interpolation of time level `i` at `x`.
    pub fn value_at(&self, i: usize, x: T) -> T {
        interpolate(&self.xs, self.row(i), x)
    }

    /// `u(t0, x)`.
    pub fn initial_value(&self, x: T) -> T {
        self.value_at(0, x)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.times == other.times && self.xs == other.xs
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn metadata(&self) -> SurfaceMetadata {
        SurfaceMetadata {
            problem: self.problem.clone(),
            method: self.method.clone(),
            alpha: self.alpha,
            boundary: self.boundary.clone(),
            t0: self.times[0].as_f64(),
            t_end: self.times[self.times.len() - 1].as_f64(),
            n_steps: self.times.len() - 1,
            x_min: self.xs[0].as_f64(),
            x_max: self.xs[self.xs.len() - 1].as_f64(),
            n_space: self.xs.len() - 1,
        }
    }

    /// CSV with header `t,x,u` and one row per node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,u")?;
        for (i, &t) in self.times.iter().enumerate() {
            for (j, &x) in self.xs.iter().enumerate() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    t.as_f64(),
                    x.as_f64(),
                    self.at(i, j).as_f64()
                )?;
            }
        }
        Ok(())
    }

    /// Parse a CSV written by [`write_csv`](Self::write_csv). Tags are left empty.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "t,x,u" => {}
            _ => return Err(Error::Io("surface CSV must start with `t,x,u`".into())),
        }
        let mut rows: Vec<[f64; 3]> = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut row = [0.0; 3];
            let mut fields = line.split(',');
            for v in row.iter_mut() {
                *v = fields
                    .next()
                    .and_then(|f| f.trim().parse().ok())
                    .ok_or_else(|| Error::Io(format!("bad surface CSV row {}", n + 2)))?;
            }
            rows.push(row);
        }
        let t0 = rows.first().map(|r| r[0]).unwrap_or(0.0);
        let n_x = rows.iter().take_while(|r| r[0] == t0).count();
        if n_x == 0 || !rows.len().is_multiple_of(n_x) {
            return Err(Error::Shape("surface CSV is not a rectangular grid".into()));
        }
        let xs: Vec<T> = rows[..n_x].iter().map(|r| T::lit(r[1])).collect();
        let times: Vec<T> = rows.iter().step_by(n_x).map(|r| T::lit(r[0])).collect();
        let values = rows.iter().map(|r| T::lit(r[2])).collect();
        Self::new(times, xs, values)
    }
}

/// Quadratic Lagrange interpolation through the three nodes nearest `x`.
pub fn interpolate<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    if n == 2 {
        let w = (x - xs[0]) / (xs[1] - xs[0]);
        return ys[0] + w * (ys[1] - ys[0]);
    }
    let pos = xs.partition_point(|&v| v < x);
    let mut c = pos.clamp(1, n - 2);
    if pos > 0 && pos < n && (x - xs[pos - 1]) < (xs[pos] - x) {
        c = (pos - 1).clamp(1, n - 2);
    }
    let (x0, x1, x2) = (xs[c - 1], xs[c], xs[c + 1]);
    let (y0, y1, y2) = (ys[c - 1], ys[c], ys[c + 1]);
    let l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
    l0 * y0 + l1 * y1 + l2 * y2
}
