//! Exact backward dynamic programming on the Markov-chain discretization.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::CoefficientSet;
use crate::scalar::Real;
use crate::sde::{ChainBoundary, ChainDiscretization};
use crate::surface::ValueSurface;

/// Convergence tolerance of the per-node fixed point, relative to `max(1, |y|)`.
pub const CHAIN_FIXED_POINT_TOL: f64 = 1e-12;

fn boundary_label(b: ChainBoundary) -> &'static str {
    match b {
        ChainBoundary::Absorbing => "absorbing",
        ChainBoundary::OneSided => "one_sided",
    }
}

/// Penalized value surface `u_alpha(t_k, x_j)` on the chain.
///
/// Each node solves `y = E[u_{k+1}] + dt (g + alpha Phi^-)(t_k, x_j, y, z)`
/// by fixed-point iteration with `z = E[u_{k+1} dW] / dt`.
pub fn solve_penalized_chain<T: Real>(
    spec: &CoefficientSet<T>,
    chain: &ChainDiscretization<T>,
    alpha: T,
) -> Result<ValueSurface<T>> {
    spec.require_dim(1)?;
    if !(alpha >= T::zero()) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    check_horizon(spec, chain)?;
    let q = spec.stiffness(chain.grid.dt, alpha);
    if q >= T::one() {
        return Err(Error::StepSize {
            stiffness: q.as_f64(),
            limit: 1.0,
        });
    }
    let surface = backward(spec, chain, |t, x, e, z, k| {
        fixed_point(e, chain.grid.dt, q, k, |y| spec.penalized_driver(t, &[x], y, &[z], alpha))
    })?;
    Ok(surface.tagged(&spec.name, "chain", boundary_label(chain.boundary), Some(alpha.as_f64())))
}

/// Reflected solution on the chain: the unpenalized step followed by
/// `max(., h)` at every node. Requires an obstacle-form constraint.
pub fn solve_projected_chain<T: Real>(
    spec: &CoefficientSet<T>,
    chain: &ChainDiscretization<T>,
) -> Result<ValueSurface<T>> {
    spec.require_dim(1)?;
    check_horizon(spec, chain)?;
    if !spec.form.is_obstacle() {
        return Err(Error::Shape(format!(
            "problem `{}` does not have an obstacle-form constraint",
            spec.name
        )));
    }
    let q = spec.stiffness(chain.grid.dt, T::zero());
    if q >= T::one() {
        return Err(Error::StepSize {
            stiffness: q.as_f64(),
            limit: 1.0,
        });
    }
    let surface = backward(spec, chain, |t, x, e, z, k| {
        let y = fixed_point(e, chain.grid.dt, q, k, |y| spec.driver(t, &[x], y, &[z]))?;
        let h = spec.obstacle(t, &[x]).expect("obstacle form");
        Ok(y.max(h))
    })?;
    Ok(surface.tagged(&spec.name, "chain_projected", boundary_label(chain.boundary), None))
}

/// Expected remaining increasing part `E[A_T - A_{t_k} | X_{t_k} = x_j]` of a
/// chain surface.
///
/// The per-step increment is `dt alpha Phi^-` for a penalized surface (one
/// carrying `alpha`) and, for a reflected one, the projection amount
/// `max(0, u_k - E[u_{k+1}] - dt g)`. With
/// `off_constraint_eps = Some(eps)` only increments at nodes where
/// `Phi(t, x, u, z) > eps` are counted.
pub fn chain_accumulation<T: Real>(
    spec: &CoefficientSet<T>,
    chain: &ChainDiscretization<T>,
    surface: &ValueSurface<T>,
    off_constraint_eps: Option<T>,
) -> Result<ValueSurface<T>> {
    let nodes = chain.nodes();
    let n = chain.grid.n_steps;
    if surface.n_times() != n + 1 || surface.xs != nodes {
        return Err(Error::GridMismatch("surface is not defined on the chain grid".into()));
    }
    let nx = nodes.len();
    let dt = chain.grid.dt;
    let alpha = surface.alpha.map(T::lit);
    let mut acc = vec![T::zero(); (n + 1) * nx];
    for k in (0..n).rev() {
        let t = chain.grid.time(k);
        let (head, tail) = acc.split_at_mut((k + 1) * nx);
        let next_acc = &tail[..nx];
        let next_u = surface.row(k + 1);
        let cur_u = surface.row(k);
        head[k * nx..]
            .par_iter_mut()
            .enumerate()
            .for_each(|(j, v)| {
                let (ew, e) = chain.expectation_with_increment(k, j, next_u);
                let z = ew / dt;
                let x = [nodes[j]];
                let counted = match off_constraint_eps {
                    Some(eps) => spec.constraint(t, &x, cur_u[j], &[z]) > eps,
                    None => true,
                };
                let excess = match (counted, alpha) {
                    (false, _) => T::zero(),
                    (true, Some(a)) => dt * a * spec.constraint(t, &x, cur_u[j], &[z]).neg_part(),
                    (true, None) => (cur_u[j] - e - dt * spec.driver(t, &x, cur_u[j], &[z])).max(T::zero()),
                };
                *v = chain.expectation(k, j, next_acc) + excess;
            });
    }
    let mut out = ValueSurface::new(chain.grid.times(), nodes.to_vec(), acc)?;
    out.problem = spec.name.clone();
    out.method = "chain_accumulation".into();
    out.boundary = boundary_label(chain.boundary).into();
    out.alpha = surface.alpha;
    Ok(out)
}

fn check_horizon<T: Real>(spec: &CoefficientSet<T>, chain: &ChainDiscretization<T>) -> Result<()> {
    if chain.grid.t_end != spec.horizon {
        return Err(Error::InvalidInput(format!(
            "chain grid ends at {} but the problem horizon is {}",
            chain.grid.t_end, spec.horizon
        )));
    }
    Ok(())
}

fn backward<T: Real, F>(
    spec: &CoefficientSet<T>,
    chain: &ChainDiscretization<T>,
    step: F,
) -> Result<ValueSurface<T>>
where
    F: Fn(T, T, T, T, usize) -> Result<T> + Sync,
{
    let nodes = chain.nodes();
    let nx = nodes.len();
    let n = chain.grid.n_steps;
    let dt = chain.grid.dt;
    let mut u = vec![T::zero(); (n + 1) * nx];
    for (j, &x) in nodes.iter().enumerate() {
        let v = spec.terminal(&[x]);
        if !v.is_finite() {
            return Err(Error::Evaluation {
                coefficient: "terminal".into(),
                input: format!("x = {x}"),
            });
        }
        u[n * nx + j] = v;
    }
    for k in (0..n).rev() {
        let t = chain.grid.time(k);
        let (head, tail) = u.split_at_mut((k + 1) * nx);
        let next = &tail[..nx];
        head[k * nx..]
            .par_iter_mut()
            .enumerate()
            .map(|(j, v)| {
                let (ew, e) = chain.expectation_with_increment(k, j, next);
                *v = step(t, nodes[j], e, ew / dt, k)?;
                Ok(())
            })
            .collect::<Result<Vec<()>>>()?;
    }
    ValueSurface::new(chain.grid.times(), nodes.to_vec(), u)
}

/// Iterate `y <- e + dt f(y)`; `q` bounds the contraction factor.
fn fixed_point<T: Real>(e: T, dt: T, q: T, k: usize, f: impl Fn(T) -> T) -> Result<T> {
    let tol = T::lit(CHAIN_FIXED_POINT_TOL);
    let floor = T::epsilon() * T::lit(4.0);
    // enough iterations to reach machine precision at contraction factor q
    let max_iter = if q > T::zero() {
        let needed = (T::epsilon().ln() / q.ln()).ceil().to_usize().unwrap_or(usize::MAX);
        needed.saturating_add(64).min(1_000_000)
    } else {
        64
    };
    let mut y = e;
    let mut last_change = T::infinity();
    for _ in 0..max_iter {
        let next = e + dt * f(y);
        let change = (next - y).abs();
        let scale = next.abs().max(T::one());
        y = next;
        if !y.is_finite() {
            break;
        }
        if change <= floor * scale || (change <= tol * scale && change >= last_change) {
            return Ok(y);
        }
        last_change = change;
    }
    if y.is_finite() && last_change <= tol * y.abs().max(T::one()) {
        return Ok(y);
    }
    Err(Error::FixedPoint {
        time_index: k,
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{build_chain, TimeGrid};

    #[test]
    fn martingale_terminal_is_preserved() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .diffusion(|_, _, o| o[0] = 0.3)
            .terminal(|x| x[0])
            .build()
            .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let chain = build_chain(&spec, &grid, -3.0, 3.0, 60).unwrap();
        let u = solve_penalized_chain(&spec, &chain, 0.0).unwrap();
        for i in 0..=100 {
            for (j, &x) in chain.nodes().iter().enumerate() {
                assert!((u.at(i, j) - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_point_solves_linear_map() {
        // y = 1 + 0.5 * (2 - y) -> y = 4/3
        let y = fixed_point(1.0f64, 0.5, 0.5, 0, |y| 2.0 - y).unwrap();
        assert!((y - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stiff_step_is_rejected() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .diffusion(|_, _, o| o[0] = 0.3)
            .obstacle(|_, _| 0.0)
            .lipschitz(0.0, 0.0, 1.0)
            .build()
            .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let chain = build_chain(&spec, &grid, -1.0, 1.0, 4).unwrap();
        let err = solve_penalized_chain(&spec, &chain, 10.0).unwrap_err();
        assert!(matches!(err, Error::StepSize { .. }));
        assert!(solve_penalized_chain(&spec, &chain, 9.0).is_ok());
    }

    #[test]
    fn projected_chain_needs_obstacle() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0).build().unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let chain = build_chain(&spec, &grid, -1.0, 1.0, 4).unwrap();
        assert!(matches!(
            solve_projected_chain(&spec, &chain).unwrap_err(),
            Error::Shape(_)
        ));
    }
}
