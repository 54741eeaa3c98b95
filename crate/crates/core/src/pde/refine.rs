use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{solve_penalized_fd, FdScheme};
use crate::problem::CoefficientSet;
use crate::scalar::Real;
use crate::sde::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRow {
    pub level: usize,
    pub n_space: usize,
    pub n_steps: usize,
    pub u0: f64,
    /// `|u0 - u0_prev|`, absent on the first level.
    pub successive_difference: Option<f64>,
    /// Absent when no predecessor pair exists.
    pub empirical_order: Option<f64>,
    /// `|u0 - reference|` when a reference value was supplied.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineTable {
    pub kind: String,
    pub alpha: f64,
    pub reference: Option<f64>,
    pub rows: Vec<RefineRow>,
    /// Successive differences shrink at every level.
    pub monotone: bool,
}

/// Run the penalized fd solver on a sequence of grids and read off `u(t0, x0)`.
///
/// Each level must double `n_space`; `n_steps` must grow 4x when
/// `theta = 0` and 2x or 4x otherwise. Orders are measured in `dt`: against
/// `reference` when given (from the second level on), otherwise from the
/// ratio of successive differences (from the third level on).
pub fn refine_study<T: Real>(
    spec: &CoefficientSet<T>,
    scheme: &FdScheme,
    alpha: T,
    levels: &[(usize, usize)],
    reference: Option<f64>,
) -> Result<RefineTable> {
    if levels.len() < 3 {
        return Err(Error::InvalidInput("refine_study needs at least 3 levels".into()));
    }
    for w in levels.windows(2) {
        let ((s0, t0), (s1, t1)) = (w[0], w[1]);
        let time_ok = if scheme.theta == 0.0 {
            t1 == 4 * t0
        } else {
            t1 == 2 * t0 || t1 == 4 * t0
        };
        if s1 != 2 * s0 || !time_ok {
            return Err(Error::InvalidInput(format!(
                "level ({s1}, {t1}) does not refine ({s0}, {t0}): space must double, time must \
                 grow 4x (explicit) or 2x/4x (implicit)"
            )));
        }
    }
    let x0 = spec.x0[0];
    let mut rows: Vec<RefineRow> = Vec::with_capacity(levels.len());
    for (level, &(n_space, n_steps)) in levels.iter().enumerate() {
        let mut sch = *scheme;
        sch.n_space = n_space;
        let grid = TimeGrid::new(T::zero(), spec.horizon, n_steps)?;
        let u0 = solve_penalized_fd(spec, &sch, &grid, alpha)?.initial_value(x0).as_f64();
        let prev = rows.last();
        let successive_difference = prev.map(|p| (u0 - p.u0).abs());
        let error = reference.map(|r| (u0 - r).abs());
        let empirical_order = match (reference, prev) {
            (Some(_), Some(p)) => order(p.error, error, p.n_steps, n_steps),
            (None, Some(p)) => order(p.successive_difference, successive_difference, p.n_steps, n_steps),
            _ => None,
        };
        rows.push(RefineRow {
            level,
            n_space,
            n_steps,
            u0,
            successive_difference,
            empirical_order,
            error,
        });
    }
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.successive_difference).collect();
    let monotone = diffs.windows(2).all(|w| w[1] < w[0]) || diffs.iter().all(|&d| d == 0.0);
    Ok(RefineTable {
        kind: "refine_table".into(),
        alpha: alpha.as_f64(),
        reference,
        rows,
        monotone,
    })
}

fn order(prev: Option<f64>, cur: Option<f64>, steps_prev: usize, steps: usize) -> Option<f64> {
    let (a, b) = (prev?, cur?);
    if a > 0.0 && b > 0.0 {
        Some((a / b).ln() / (steps as f64 / steps_prev as f64).ln())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_grid_independent() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .terminal(|_| 3.0)
            .build()
            .unwrap();
        let scheme = FdScheme::implicit(-1.0, 1.0, 8);
        let t = refine_study(&spec, &scheme, 10.0, &[(8, 4), (16, 8), (32, 16)], None).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t.rows.iter().all(|r| r.u0 == 3.0));
        assert_eq!(t.rows[1].successive_difference, Some(0.0));
        assert!(t.rows.iter().all(|r| r.empirical_order.is_none()));
        assert!(t.monotone);
    }

    #[test]
    fn level_ladder_is_validated() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0).build().unwrap();
        let mut scheme = FdScheme::implicit(-1.0, 1.0, 8);
        assert!(refine_study(&spec, &scheme, 0.0, &[(8, 4), (16, 8)], None).is_err());
        assert!(refine_study(&spec, &scheme, 0.0, &[(8, 4), (16, 12), (32, 24)], None).is_err());
        scheme.theta = 0.0;
        assert!(refine_study(&spec, &scheme, 0.0, &[(8, 4), (16, 8), (32, 16)], None).is_err());
    }
}
