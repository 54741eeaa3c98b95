//! Least-squares Monte Carlo for the penalized BSDE.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::basis::{CellModel, Partition, RegressionBasis};
use crate::bsde::PenalizedBsdeSolution;
use crate::error::{Error, Result};
use crate::linalg::solve_normal_equations;
use crate::problem::{CoefficientSet, ConstraintForm};
use crate::scalar::Real;
use crate::sde::PathEnsemble;

/// Paths per regression block; partial sums are reduced in block order.
pub const REGRESSION_BLOCK: usize = 8192;

/// Stiffness bound for the explicit-lagged penalty.
pub const EXPLICIT_STIFFNESS_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyTreatment {
    /// `alpha * Phi^-` is solved implicitly in `y` at each node by a monotone
    /// scalar root search; `g` is handled by Picard corrections.
    #[default]
    SemiImplicit,
    /// `g + alpha * Phi^-` both lagged in the Picard iteration; requires
    /// `dt * (mu + alpha * mu2) <= 0.5`.
    ExplicitLagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncreasingPart {
    /// `dA = alpha * Phi^- dt`.
    #[default]
    PenaltyOnly,
    /// `dA = (g + alpha * Phi^-) dt`, kept for comparison runs.
    WithDriver,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsmcOptions {
    pub basis: RegressionBasis,
    pub picard_iters: usize,
    pub penalty: PenaltyTreatment,
    pub increasing_part: IncreasingPart,
}

impl Default for LsmcOptions {
    fn default() -> Self {
        Self {
            basis: RegressionBasis::default(),
            picard_iters: 2,
            penalty: PenaltyTreatment::SemiImplicit,
            increasing_part: IncreasingPart::PenaltyOnly,
        }
    }
}

/// Solve `-dY = (g + alpha Phi^-)(t, X, Y, Z) dt - Z dW`, `Y_T = Psi(X_T)`
/// backward along the ensemble.
pub fn solve_penalized_lsmc<T: Real>(
    ensemble: &PathEnsemble<T>,
    spec: &CoefficientSet<T>,
    alpha: T,
    options: &LsmcOptions,
) -> Result<PenalizedBsdeSolution<T>> {
    let grid = &ensemble.grid;
    if grid.t_end != spec.horizon {
        return Err(Error::InvalidInput(format!(
            "ensemble ends at {} but the problem horizon is {}",
            grid.t_end, spec.horizon
        )));
    }
    if ensemble.dim != spec.dim {
        return Err(Error::Shape(format!(
            "ensemble dimension {} does not match problem dimension {}",
            ensemble.dim, spec.dim
        )));
    }
    if !(alpha >= T::zero()) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if options.picard_iters == 0 {
        return Err(Error::InvalidInput("picard_iters must be at least 1".into()));
    }
    options.basis.validate()?;
    let stiffness = spec.stiffness(grid.dt, alpha);
    match options.penalty {
        PenaltyTreatment::ExplicitLagged => {
            if stiffness.as_f64() > EXPLICIT_STIFFNESS_LIMIT {
                return Err(Error::StepSize {
                    stiffness: stiffness.as_f64(),
                    limit: EXPLICIT_STIFFNESS_LIMIT,
                });
            }
        }
        PenaltyTreatment::SemiImplicit => {
            if alpha > T::zero() && !spec.form.monotone_in_y() {
                return Err(Error::InvalidInput(
                    "semi-implicit penalty needs a constraint nondecreasing in y; \
                     use the explicit-lagged treatment"
                        .into(),
                ));
            }
        }
    }

    let np = ensemble.n_paths;
    let n = grid.n_steps;
    let d = spec.dim;
    let dt = grid.dt;
    let mut y = vec![T::zero(); np * (n + 1)];
    let mut z = vec![T::zero(); np * n * d];
    let mut phi = vec![T::zero(); np * n];

    y[n * np..]
        .par_iter_mut()
        .enumerate()
        .for_each(|(p, v)| *v = spec.terminal(ensemble.state(p, n)));
    if let Some(p) = (0..np).find(|&p| !y[n * np + p].is_finite()) {
        return Err(Error::Evaluation {
            coefficient: "terminal".into(),
            input: format!("{:?}", ensemble.state(p, n)),
        });
    }

    for k in (0..n).rev() {
        let t = grid.time(k);
        let (head, tail) = y.split_at_mut((k + 1) * np);
        let next = &tail[..np];
        let cur = &mut head[k * np..];
        let (models, assignment, coeffs) =
            regress_step(ensemble, k, next, &options.basis, d, dt)?;

        let zk = &mut z[k * np * d..(k + 1) * np * d];
        let phik = &mut phi[k * np..(k + 1) * np];
        let failed = cur
            .par_iter_mut()
            .zip(zk.par_chunks_mut(d))
            .zip(phik.par_iter_mut())
            .enumerate()
            .map(|(p, ((yv, zv), pv))| {
                let x = ensemble.state(p, k);
                let c = assignment[p];
                let model = &models[c];
                let m = model.len();
                let mut feat = [T::zero(); 64];
                let mut heap;
                let feat: &mut [T] = if m <= 64 {
                    &mut feat[..m]
                } else {
                    heap = vec![T::zero(); m];
                    &mut heap
                };
                model.eval(x, feat);
                let beta = &coeffs[c];
                let dot = |col: usize| {
                    feat.iter()
                        .zip(&beta[col * m..(col + 1) * m])
                        .fold(T::zero(), |acc, (&f, &b)| acc + f * b)
                };
                let cont = dot(0);
                for (i, zi) in zv.iter_mut().enumerate() {
                    *zi = dot(i + 1);
                }
                let mut yk = cont;
                for _ in 0..options.picard_iters {
                    let g = spec.driver(t, x, yk, zv);
                    yk = match options.penalty {
                        PenaltyTreatment::SemiImplicit => {
                            implicit_penalty(spec, t, x, zv, cont + dt * g, dt * alpha)
                        }
                        PenaltyTreatment::ExplicitLagged => {
                            let pen = if alpha > T::zero() {
                                alpha * spec.constraint(t, x, yk, zv).neg_part()
                            } else {
                                T::zero()
                            };
                            cont + dt * (g + pen)
                        }
                    };
                }
                *yv = yk;
                *pv = spec.constraint(t, x, yk, zv);
                !yk.is_finite()
            })
            .reduce(|| false, |a, b| a || b);
        if failed {
            return Err(Error::Divergence {
                step: k,
                stiffness: stiffness.as_f64(),
            });
        }
    }

    let mut a = vec![T::zero(); np * (n + 1)];
    for k in 0..n {
        let t = grid.time(k);
        let (done, rest) = a.split_at_mut((k + 1) * np);
        let prev = &done[k * np..];
        rest[..np].par_iter_mut().enumerate().for_each(|(p, av)| {
            let pen = alpha * phi[k * np + p].neg_part();
            let rate = match options.increasing_part {
                IncreasingPart::PenaltyOnly => pen,
                IncreasingPart::WithDriver => {
                    let zk = &z[(k * np + p) * d..(k * np + p + 1) * d];
                    spec.driver(t, ensemble.state(p, k), y[k * np + p], zk) + pen
                }
            };
            *av = prev[p] + rate * dt;
        });
    }

    let npf = T::from_usize_lossy(np);
    let y0 = y[..np].iter().fold(T::zero(), |acc, &v| acc + v) / npf;
    let y0_stderr = if np > 1 {
        let y1 = &y[np..2 * np];
        let mean = y1.iter().fold(T::zero(), |acc, &v| acc + v) / npf;
        let var = y1
            .iter()
            .fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean))
            / T::from_usize_lossy(np - 1);
        (var / npf).sqrt()
    } else {
        T::zero()
    };

    Ok(PenalizedBsdeSolution {
        n_paths: np,
        n_steps: n,
        dim: d,
        y,
        z,
        a,
        phi,
        alpha,
        y0,
        y0_stderr,
    })
}

type StepFit<T> = (Vec<CellModel<T>>, Vec<usize>, Vec<Vec<T>>);

/// Regress `Y_{k+1}` and `(Y_{k+1} - m_c) dW_k / dt` on the basis at `X_k`,
/// where `m_c` is the mean of `Y_{k+1}` over the path's cell.
fn regress_step<T: Real>(
    ensemble: &PathEnsemble<T>,
    k: usize,
    next: &[T],
    basis: &RegressionBasis,
    d: usize,
    dt: T,
) -> Result<StepFit<T>> {
    let np = ensemble.n_paths;
    let firsts: Vec<T> = (0..np).map(|p| ensemble.state(p, k)[0]).collect();
    let part = Partition::new(&firsts, basis.cells);
    let n_cells = part.n_cells();
    let assignment: Vec<usize> = firsts.iter().map(|&x| part.cell_of(x)).collect();

    let mut lo = vec![vec![T::infinity(); d]; n_cells];
    let mut hi = vec![vec![T::neg_infinity(); d]; n_cells];
    let mut counts = vec![0usize; n_cells];
    for (p, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (i, &v) in ensemble.state(p, k).iter().enumerate() {
            lo[c][i] = lo[c][i].min(v);
            hi[c][i] = hi[c][i].max(v);
        }
    }
    let models: Vec<CellModel<T>> = lo
        .into_iter()
        .zip(&hi)
        .zip(&counts)
        .map(|((l, h), &count)| {
            if count == 0 {
                CellModel::new(basis.family, vec![T::zero(); d], &vec![T::zero(); d])
            } else {
                CellModel::new(basis.family, l, h)
            }
        })
        .collect();
    let mut centre = vec![T::zero(); n_cells];
    for (p, &c) in assignment.iter().enumerate() {
        centre[c] += next[p];
    }
    for (m, &count) in centre.iter_mut().zip(&counts) {
        if count > 0 {
            *m /= T::from_usize_lossy(count);
        }
    }
    let sizes: Vec<usize> = models.iter().map(|m| m.len()).collect();
    let n_rhs = 1 + d;
    let inv_dt = T::one() / dt;

    // Per block: for each cell, [gram (m*m) | rhs (n_rhs*m)].
    let partials: Vec<Vec<Vec<T>>> = (0..np.div_ceil(REGRESSION_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc: Vec<Vec<T>> =
                sizes.iter().map(|&m| vec![T::zero(); m * m + n_rhs * m]).collect();
            let mut feat = vec![T::zero(); sizes.iter().copied().max().unwrap_or(1)];
            for p in b * REGRESSION_BLOCK..((b + 1) * REGRESSION_BLOCK).min(np) {
                let c = assignment[p];
                let m = sizes[c];
                let f = &mut feat[..m];
                models[c].eval(ensemble.state(p, k), f);
                let buf = &mut acc[c];
                for r in 0..m {
                    for s in 0..=r {
                        buf[r * m + s] += f[r] * f[s];
                    }
                }
                let target = next[p];
                let dw = ensemble.increment(p, k);
                for r in 0..m {
                    buf[m * m + r] += f[r] * target;
                }
                let centred = target - centre[c];
                for (i, &w) in dw.iter().enumerate() {
                    let tz = centred * w * inv_dt;
                    for r in 0..m {
                        buf[m * m + (i + 1) * m + r] += f[r] * tz;
                    }
                }
            }
            acc
        })
        .collect();

    let mut coeffs = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let m = sizes[c];
        if counts[c] == 0 {
            coeffs.push(vec![T::zero(); n_rhs * m]);
            continue;
        }
        let mut total = vec![T::zero(); m * m + n_rhs * m];
        for block in &partials {
            for (t, &v) in total.iter_mut().zip(&block[c]) {
                *t += v;
            }
        }
        for r in 0..m {
            for s in 0..r {
                total[s * m + r] = total[r * m + s];
            }
        }
        let beta = solve_normal_equations(&total[..m * m], &total[m * m..], m)
            .ok_or(Error::Conditioning { step: k })?;
        coeffs.push(beta);
    }
    Ok((models, assignment, coeffs))
}

/// Solve `y = lo + dt_alpha * Phi^-(t, x, y, z)` for `y`; the map is monotone
/// because `Phi` is nondecreasing in `y`.
fn implicit_penalty<T: Real>(
    spec: &CoefficientSet<T>,
    t: T,
    x: &[T],
    z: &[T],
    lo: T,
    dt_alpha: T,
) -> T {
    if dt_alpha == T::zero() {
        return lo;
    }
    let deficit = spec.constraint(t, x, lo, z).neg_part();
    if deficit == T::zero() || !deficit.is_finite() {
        return lo;
    }
    if let ConstraintForm::Obstacle(h) = &spec.form {
        return (lo + dt_alpha * h(t, x)) / (T::one() + dt_alpha);
    }
    let f = |y: T| y - lo - dt_alpha * spec.constraint(t, x, y, z).neg_part();
    let (mut a, mut b) = (lo, lo + dt_alpha * deficit);
    let (mut fa, mut fb) = (f(a), f(b));
    if fb <= T::zero() {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = (a + b) * T::lit(0.5);
        }
        let fc = f(c);
        if fc == T::zero() || (b - a) <= T::epsilon() * T::lit(4.0) * c.abs().max(T::one()) {
            return c;
        }
        if fc < T::zero() {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= T::lit(0.5);
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= T::lit(0.5);
            }
            side = 1;
        }
    }
    (a + b) * T::lit(0.5)
}
