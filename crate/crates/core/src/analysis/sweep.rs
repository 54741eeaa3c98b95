//! Penalization sweeps `alpha -> u_alpha` and their convergence report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{
    chain_accumulation, increasing_part_stats, solve_penalized_chain, solve_penalized_lsmc,
    IncreasingPartStats, LsmcOptions,
};
use crate::error::{Error, Result};
use crate::pde::{fd_accumulation, solve_penalized_fd, FdScheme};
use crate::problem::CoefficientSet;
use crate::scalar::Real;
use crate::sde::{ChainDiscretization, PathEnsemble, TimeGrid};
use crate::surface::ValueSurface;

/// Nodewise decreases smaller than this are not counted as violations.
pub const MONOTONICITY_TOL: f64 = 1e-10;

/// Solver and resources a sweep runs on.
#[derive(Debug, Clone)]
pub enum SweepMethod<'a, T> {
    Fd { scheme: FdScheme, grid: TimeGrid<T> },
    Chain { chain: &'a ChainDiscretization<T> },
    Lsmc { ensemble: &'a PathEnsemble<T>, options: LsmcOptions },
}

impl<T> SweepMethod<'_, T> {
    pub fn label(&self) -> &'static str {
        match self {
            SweepMethod::Fd { .. } => "fd",
            SweepMethod::Chain { .. } => "chain",
            SweepMethod::Lsmc { .. } => "lsmc",
        }
    }
}

/// Result of one sweep member.
#[derive(Debug, Clone)]
pub struct SweepMember<T> {
    pub alpha: f64,
    pub u0: f64,
    /// Monte Carlo standard error (lsmc only).
    pub u0_stderr: Option<f64>,
    /// `E[A_T]` from the pathwise solution or the accumulation equation.
    pub a_total: f64,
    /// Value surface (deterministic methods only).
    pub surface: Option<ValueSurface<T>>,
    /// Pathwise increasing-part summary (lsmc only).
    pub lsmc_stats: Option<IncreasingPartStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRef {
    pub alpha: f64,
    /// Artifact path relative to the report, filled in by the runner.
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub count: usize,
    pub max_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub kind: String,
    pub problem: String,
    pub method: String,
    pub alphas: Vec<f64>,
    pub u0: Vec<f64>,
    pub u0_stderr: Vec<Option<f64>>,
    pub surfaces_meta: Vec<SurfaceRef>,
    /// One entry per consecutive pair `(alpha_k, alpha_{k+1})`.
    pub monotonicity_violations: Vec<MonotonicityViolation>,
    pub cauchy_deltas: Vec<f64>,
    pub a_totals: Vec<f64>,
    /// Richardson extrapolation of `u0` over the last two levels, assuming
    /// the gap to the limit is proportional to `1 / alpha`.
    pub limit_estimate: f64,
}

impl ConvergenceReport {
    pub fn total_violations(&self) -> usize {
        self.monotonicity_violations.iter().map(|v| v.count).sum()
    }

    pub fn deltas_strictly_decreasing(&self) -> bool {
        self.cauchy_deltas.windows(2).all(|w| w[1] < w[0])
    }
}

/// Richardson estimate `(a2 u2 - a1 u1) / (a2 - a1)` under `u_a = u - c / a`.
pub fn richardson_limit(a1: f64, u1: f64, a2: f64, u2: f64) -> f64 {
    if u1 == u2 {
        return u2;
    }
    (a2 * u2 - a1 * u1) / (a2 - a1)
}

/// Run the chosen solver for every `alpha` and assemble the convergence report.
///
/// Deterministic methods run the levels concurrently; lsmc levels share the
/// ensemble and run one after another. Members come back in `alphas` order.
pub fn penalization_sweep<T: Real>(
    spec: &CoefficientSet<T>,
    method: &SweepMethod<'_, T>,
    alphas: &[f64],
) -> Result<(ConvergenceReport, Vec<SweepMember<T>>)> {
    if alphas.len() < 4 {
        return Err(Error::InvalidInput("a penalization sweep needs at least 4 alphas".into()));
    }
    if alphas.windows(2).any(|w| !(w[1] > w[0])) || !(alphas[0] >= 0.0) {
        return Err(Error::InvalidInput("alphas must be nonnegative and strictly increasing".into()));
    }
    let x0 = spec.x0.clone();
    let run = |&alpha: &f64| -> Result<SweepMember<T>> {
        let a = T::lit(alpha);
        run_member(spec, method, a, &x0).map_err(|e| e.at_alpha(alpha))
    };
    let members: Vec<SweepMember<T>> = match method {
        SweepMethod::Lsmc { .. } => alphas.iter().map(run).collect::<Result<_>>()?,
        _ => alphas.par_iter().map(run).collect::<Result<_>>()?,
    };

    let report = convergence_report(&spec.name, method.label(), &members)?;
    Ok((report, members))
}

/// Assemble the report from members ordered by increasing `alpha`.
///
/// Members with surfaces are compared nodewise; members without (lsmc) are
/// compared through `u0`, a decrease counting as a violation only beyond
/// three combined standard errors.
pub fn convergence_report<T: Real>(
    problem: &str,
    method: &str,
    members: &[SweepMember<T>],
) -> Result<ConvergenceReport> {
    if members.len() < 2 {
        return Err(Error::InvalidInput("a convergence report needs at least 2 members".into()));
    }
    let mut violations = Vec::new();
    let mut deltas = Vec::new();
    for w in members.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        match (&lo.surface, &hi.surface) {
            (Some(a), Some(b)) => {
                let mut count = 0;
                let mut worst: f64 = 0.0;
                let mut sup: f64 = 0.0;
                for (&u1, &u2) in a.values.iter().zip(&b.values) {
                    let drop = (u1 - u2).as_f64();
                    if drop > MONOTONICITY_TOL {
                        count += 1;
                    }
                    worst = worst.max(drop);
                    sup = sup.max(drop.abs());
                }
                violations.push(MonotonicityViolation {
                    count,
                    max_magnitude: worst.max(0.0),
                });
                deltas.push(sup);
            }
            _ => {
                let se = (lo.u0_stderr.unwrap_or(0.0).powi(2) + hi.u0_stderr.unwrap_or(0.0).powi(2)).sqrt();
                let drop = lo.u0 - hi.u0;
                violations.push(MonotonicityViolation {
                    count: usize::from(drop > 3.0 * se + MONOTONICITY_TOL),
                    max_magnitude: drop.max(0.0),
                });
                deltas.push((hi.u0 - lo.u0).abs());
            }
        }
    }
    let n = members.len();
    let limit_estimate = richardson_limit(
        members[n - 2].alpha,
        members[n - 2].u0,
        members[n - 1].alpha,
        members[n - 1].u0,
    );
    Ok(ConvergenceReport {
        kind: "convergence_report".into(),
        problem: problem.into(),
        method: method.into(),
        alphas: members.iter().map(|m| m.alpha).collect(),
        u0: members.iter().map(|m| m.u0).collect(),
        u0_stderr: members.iter().map(|m| m.u0_stderr).collect(),
        surfaces_meta: members
            .iter()
            .filter(|m| m.surface.is_some())
            .map(|m| SurfaceRef {
                alpha: m.alpha,
                path: None,
            })
            .collect(),
        monotonicity_violations: violations,
        cauchy_deltas: deltas,
        a_totals: members.iter().map(|m| m.a_total).collect(),
        limit_estimate,
    })
}

fn run_member<T: Real>(
    spec: &CoefficientSet<T>,
    method: &SweepMethod<'_, T>,
    alpha: T,
    x0: &[T],
) -> Result<SweepMember<T>> {
    match method {
        SweepMethod::Fd { scheme, grid } => {
            let u = solve_penalized_fd(spec, scheme, grid, alpha)?;
            let acc = fd_accumulation(spec, scheme, grid, &u, None)?;
            Ok(deterministic_member(alpha, u, &acc, x0[0]))
        }
        SweepMethod::Chain { chain } => {
            let u = solve_penalized_chain(spec, chain, alpha)?;
            let acc = chain_accumulation(spec, chain, &u, None)?;
            Ok(deterministic_member(alpha, u, &acc, x0[0]))
        }
        SweepMethod::Lsmc { ensemble, options } => {
            let sol = solve_penalized_lsmc(ensemble, spec, alpha, options)?;
            let stats = increasing_part_stats(&sol);
            Ok(SweepMember {
                alpha: alpha.as_f64(),
                u0: sol.y0.as_f64(),
                u0_stderr: Some(sol.y0_stderr.as_f64()),
                a_total: stats.mean_total,
                surface: None,
                lsmc_stats: Some(stats),
            })
        }
    }
}

fn deterministic_member<T: Real>(
    alpha: T,
    u: ValueSurface<T>,
    acc: &ValueSurface<T>,
    x0: T,
) -> SweepMember<T> {
    SweepMember {
        alpha: alpha.as_f64(),
        u0: u.initial_value(x0).as_f64(),
        u0_stderr: None,
        a_total: acc.initial_value(x0).as_f64(),
        surface: Some(u),
        lsmc_stats: None,
    }
}
