//! Regression bases for conditional expectations.
//!
//! The state space at each time step is cut into `cells` slabs of equal
//! empirical mass along the first coordinate; inside each slab the basis is
//! either a total-degree Legendre family or piecewise-linear hats, both
//! normalized to the slab's bounding box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisFamily {
    /// Legendre polynomials of total degree at most `degree`.
    Polynomial { degree: usize },
    /// Hat functions on `n_knots` equally spaced knots per coordinate.
    PiecewiseLinear { n_knots: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub family: BasisFamily,
    /// Number of equal-mass slabs along the first coordinate.
    pub cells: usize,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self::polynomial(4)
    }
}

impl RegressionBasis {
    pub const DEFAULT_CELLS: usize = 8;

    pub fn polynomial(degree: usize) -> Self {
        Self {
            family: BasisFamily::Polynomial { degree },
            cells: Self::DEFAULT_CELLS,
        }
    }

    pub fn piecewise_linear(n_knots: usize) -> Self {
        Self {
            family: BasisFamily::PiecewiseLinear { n_knots },
            cells: Self::DEFAULT_CELLS,
        }
    }

    pub fn with_cells(mut self, cells: usize) -> Self {
        self.cells = cells;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::InvalidInput("basis needs at least one cell".into()));
        }
        if let BasisFamily::PiecewiseLinear { n_knots } = self.family {
            if n_knots < 2 {
                return Err(Error::InvalidInput("piecewise-linear basis needs n_knots >= 2".into()));
            }
        }
        Ok(())
    }
}

/// Assignment of sample points to equal-mass slabs.
#[derive(Debug, Clone)]
pub(crate) struct Partition<T> {
    /// Lower edges of slabs `1..cells`.
    edges: Vec<T>,
}

impl<T: Real> Partition<T> {
    pub(crate) fn new(first_coords: &[T], cells: usize) -> Self {
        let mut sorted = first_coords.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite states"));
        let n = sorted.len();
        let mut edges = Vec::new();
        if n > 0 && sorted[0] < sorted[n - 1] {
            for c in 1..cells {
                let e = sorted[c * n / cells];
                if edges.last().is_none_or(|&last| e > last) && e > sorted[0] {
                    edges.push(e);
                }
            }
        }
        Self { edges }
    }

    pub(crate) fn n_cells(&self) -> usize {
        self.edges.len() + 1
    }

    #[inline]
    pub(crate) fn cell_of(&self, x0: T) -> usize {
        self.edges.partition_point(|&e| e <= x0)
    }
}

/// Basis restricted to one slab.
#[derive(Debug, Clone)]
pub(crate) struct CellModel<T> {
    lo: Vec<T>,
    scale: Vec<T>,
    terms: Terms,
}

#[derive(Debug, Clone)]
enum Terms {
    /// Exponent tuples over the active coordinates.
    Legendre { active: Vec<usize>, exps: Vec<Vec<usize>>, degree: usize },
    Hats { active: Vec<usize>, n_knots: usize },
}

impl<T: Real> CellModel<T> {
    /// Model for a slab with coordinate-wise bounds `lo..hi`; coordinates of
    /// zero width carry only the constant.
    pub(crate) fn new(family: BasisFamily, lo: Vec<T>, hi: &[T]) -> Self {
        let active: Vec<usize> = (0..lo.len()).filter(|&i| hi[i] > lo[i]).collect();
        let scale = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| if h > l { T::lit(2.0) / (h - l) } else { T::zero() })
            .collect();
        let terms = match family {
            BasisFamily::Polynomial { degree } => {
                let mut exps = Vec::new();
                let mut cur = vec![0; active.len()];
                multi_indices(&mut cur, 0, degree, &mut exps);
                Terms::Legendre { active, exps, degree }
            }
            BasisFamily::PiecewiseLinear { n_knots } => Terms::Hats { active, n_knots },
        };
        Self { lo, scale, terms }
    }

    pub(crate) fn len(&self) -> usize {
        match &self.terms {
            Terms::Legendre { exps, .. } => exps.len(),
            Terms::Hats { active, n_knots } => 1 + active.len() * (n_knots - 1),
        }
    }

    /// Evaluate the basis at `x` into `out` (length [`len`](Self::len)).
    pub(crate) fn eval(&self, x: &[T], out: &mut [T]) {
        match &self.terms {
            Terms::Legendre { active, exps, degree } => {
                let stride = degree + 1;
                let mut table = [T::zero(); 64];
                let mut heap;
                let table: &mut [T] = if active.len() * stride <= table.len() {
                    &mut table[..active.len() * stride]
                } else {
                    heap = vec![T::zero(); active.len() * stride];
                    &mut heap
                };
                for (a, &i) in active.iter().enumerate() {
                    let u = ((x[i] - self.lo[i]) * self.scale[i] - T::one())
                        .max(-T::one())
                        .min(T::one());
                    legendre(u, &mut table[a * stride..(a + 1) * stride]);
                }
                for (o, e) in out.iter_mut().zip(exps) {
                    let mut v = T::one();
                    for (a, &p) in e.iter().enumerate() {
                        if p > 0 {
                            v *= table[a * stride + p];
                        }
                    }
                    *o = v;
                }
            }
            Terms::Hats { active, n_knots } => {
                out.fill(T::zero());
                out[0] = T::one();
                let segments = T::from_usize_lossy(n_knots - 1);
                for (a, &i) in active.iter().enumerate() {
                    // position in knot units, clamped to the slab
                    let s = ((x[i] - self.lo[i]) * self.scale[i] * T::lit(0.5) * segments)
                        .max(T::zero())
                        .min(segments);
                    let left = s.floor().to_usize().unwrap_or(0).min(n_knots - 2);
                    let w = s - T::from_usize_lossy(left);
                    let base = 1 + a * (n_knots - 1);
                    // hat 0 is dropped: the hats sum to one, which is the constant
                    if left > 0 {
                        out[base + left - 1] = T::one() - w;
                    }
                    out[base + left] = w;
                }
            }
        }
    }
}

fn multi_indices(cur: &mut Vec<usize>, pos: usize, budget: usize, out: &mut Vec<Vec<usize>>) {
    if pos == cur.len() {
        out.push(cur.clone());
        return;
    }
    for p in 0..=budget {
        cur[pos] = p;
        multi_indices(cur, pos + 1, budget - p, out);
    }
    cur[pos] = 0;
}

fn legendre<T: Real>(u: T, out: &mut [T]) {
    out[0] = T::one();
    if out.len() > 1 {
        out[1] = u;
    }
    for n in 2..out.len() {
        let nf = T::from_usize_lossy(n);
        out[n] = ((nf + nf - T::one()) * u * out[n - 1] - (nf - T::one()) * out[n - 2]) / nf;
    }
}
