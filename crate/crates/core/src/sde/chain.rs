//! Moment-matched Markov chain on a uniform 1D grid.
//!
//! At node `x_j` and time `t_k` the chain moves to neighbouring nodes with
//! probabilities chosen so that the step has mean `b dt` and variance
//! `sigma^2 dt`, the first two moments of an Euler step. Each move also
//! carries the Brownian increment `dW = (dX - b dt) / sigma` it represents,
//! which the backward solver uses to estimate `Z`.
//!
//! When `sigma^2 dt` is large against `dx^2` the nearest-neighbour stencil has
//! negative weights. Such nodes switch to a wide stencil: three nodes `stride`
//! cells apart, centred on the node nearest the Euler mean, again matching both
//! moments. A wide stencil that would leave the grid makes the node absorbing
//! (or is an error under [`ChainBoundary::OneSided`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::CoefficientSet;
use crate::scalar::Real;
use crate::sde::{SpaceGrid, TimeGrid};

const CLIP_TOL: f64 = 1e-12;

/// Treatment of the two end nodes of the space grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainBoundary {
    /// End nodes are absorbing (the state is frozen there).
    #[default]
    Absorbing,
    /// End nodes use inward three-point stencils that also match both moments.
    /// Infeasible whenever diffusion dominates drift at the boundary.
    OneSided,
}

/// Transition from one node: probabilities over nodes
/// `base, base + stride, base + 2 stride`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStencil<T> {
    pub base: usize,
    pub stride: usize,
    pub probs: [T; 3],
    /// Brownian increment represented by each destination.
    pub dw: [T; 3],
    /// The node does not match the Euler moments and stays put.
    pub absorbing: bool,
}

impl<T> ChainStencil<T> {
    #[inline]
    pub fn destination(&self, m: usize) -> usize {
        self.base + m * self.stride
    }
}

#[derive(Debug, Clone)]
pub struct ChainDiscretization<T> {
    pub grid: TimeGrid<T>,
    pub space: SpaceGrid<T>,
    pub boundary: ChainBoundary,
    nodes: Vec<T>,
    stencils: Vec<ChainStencil<T>>,
}

impl<T: Real> ChainDiscretization<T> {
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    #[inline]
    pub fn stencil(&self, k: usize, j: usize) -> &ChainStencil<T> {
        &self.stencils[k * self.nodes.len() + j]
    }

    /// True when node `j` is frozen at step `k` instead of matching the Euler moments.
    pub fn is_absorbing(&self, k: usize, j: usize) -> bool {
        self.stencil(k, j).absorbing
    }

    /// `E[f(X_{k+1}) | X_k = x_j]`.
    #[inline]
    pub fn expectation(&self, k: usize, j: usize, values: &[T]) -> T {
        let s = self.stencil(k, j);
        (0..3).fold(T::zero(), |acc, m| acc + s.probs[m] * values[s.destination(m)])
    }

    /// `(E[f dW], E[f])` in one pass.
    #[inline]
    pub fn expectation_with_increment(&self, k: usize, j: usize, values: &[T]) -> (T, T) {
        let s = self.stencil(k, j);
        let mut e = T::zero();
        let mut ew = T::zero();
        for m in 0..3 {
            let v = s.probs[m] * values[s.destination(m)];
            e += v;
            ew += v * s.dw[m];
        }
        (ew, e)
    }

    /// Mean and variance of the one-step displacement from node `j` at step `k`.
    pub fn moments(&self, k: usize, j: usize) -> (T, T) {
        let s = self.stencil(k, j);
        let xj = self.nodes[j];
        let mut mean = T::zero();
        let mut second = T::zero();
        for m in 0..3 {
            let d = self.nodes[s.destination(m)] - xj;
            mean += s.probs[m] * d;
            second += s.probs[m] * d * d;
        }
        (mean, second - mean * mean)
    }
}

/// Build the chain with absorbing end nodes.
pub fn build_chain<T: Real>(
    spec: &CoefficientSet<T>,
    grid: &TimeGrid<T>,
    x_min: T,
    x_max: T,
    n_space: usize,
) -> Result<ChainDiscretization<T>> {
    build_chain_with(spec, grid, x_min, x_max, n_space, ChainBoundary::Absorbing)
}

pub fn build_chain_with<T: Real>(
    spec: &CoefficientSet<T>,
    grid: &TimeGrid<T>,
    x_min: T,
    x_max: T,
    n_space: usize,
    boundary: ChainBoundary,
) -> Result<ChainDiscretization<T>> {
    spec.require_dim(1)?;
    let space = SpaceGrid::new(x_min, x_max, n_space)?;
    let nodes = space.nodes();
    let n_nodes = nodes.len();
    let dx = space.dx();
    let dt = grid.dt;
    let mut stencils = Vec::with_capacity(grid.n_steps * n_nodes);
    let tol = T::lit(CLIP_TOL);

    let half = T::lit(0.5);
    let last = n_nodes - 1;
    let infeasible = |k: usize, j: usize, p: T| Error::InfeasibleDiscretization {
        time_index: k,
        node: j,
        x: nodes[j].as_f64(),
        probability: p.as_f64(),
    };
    let frozen = |j: usize| ChainStencil {
        base: j,
        stride: 0,
        probs: [T::zero(), T::one(), T::zero()],
        dw: [T::zero(); 3],
        absorbing: true,
    };

    for k in 0..grid.n_steps {
        let t = grid.time(k);
        for (j, &x) in nodes.iter().enumerate() {
            let b = spec.drift_1d(t, x);
            let s = spec.sigma_1d(t, x);
            let m = b * dt;
            let var = s * s * dt;
            let second = (var + m * m) / (dx * dx);
            let mean = m / dx;
            let dw_for = |offsets: [T; 3]| {
                if s == T::zero() {
                    [T::zero(); 3]
                } else {
                    offsets.map(|o| (o - m) / s)
                }
            };

            let stencil = if j > 0 && j < last {
                let raw = [half * (second - mean), T::one() - second, half * (second + mean)];
                match clip(raw, tol) {
                    Ok(probs) => ChainStencil {
                        base: j - 1,
                        stride: 1,
                        probs,
                        dw: dw_for([-dx, T::zero(), dx]),
                        absorbing: false,
                    },
                    Err(p) => match wide_stencil(&nodes, j, x_min, dx, m, var, tol) {
                        Some(Ok((c, stride, probs))) => {
                            let h = T::lit(stride as f64) * dx;
                            let shift = nodes[c] - x;
                            ChainStencil {
                                base: c - stride,
                                stride,
                                probs,
                                dw: dw_for([shift - h, shift, shift + h]),
                                absorbing: false,
                            }
                        }
                        Some(Err(_)) => return Err(infeasible(k, j, p)),
                        None if boundary == ChainBoundary::Absorbing => frozen(j),
                        None => return Err(infeasible(k, j, p)),
                    },
                }
            } else if boundary == ChainBoundary::Absorbing {
                frozen(j)
            } else if j == 0 {
                let p2 = half * (second - mean);
                let p1 = mean - p2 - p2;
                let probs = clip([T::one() - p1 - p2, p1, p2], tol).map_err(|p| infeasible(k, j, p))?;
                ChainStencil {
                    base: 0,
                    stride: 1,
                    probs,
                    dw: dw_for([T::zero(), dx, dx + dx]),
                    absorbing: false,
                }
            } else {
                let p2 = half * (second + mean);
                let p1 = -mean - p2 - p2;
                let probs = clip([p2, p1, T::one() - p1 - p2], tol).map_err(|p| infeasible(k, j, p))?;
                ChainStencil {
                    base: last - 2,
                    stride: 1,
                    probs,
                    dw: dw_for([-(dx + dx), -dx, T::zero()]),
                    absorbing: false,
                }
            };
            stencils.push(stencil);
        }
    }
    Ok(ChainDiscretization {
        grid: *grid,
        space,
        boundary,
        nodes,
        stencils,
    })
}

/// Snap round-off outside `[0, 1]`; `Err` carries the first genuinely bad weight.
fn clip<T: Real>(raw: [T; 3], tol: T) -> std::result::Result<[T; 3], T> {
    let mut probs = raw;
    for p in probs.iter_mut() {
        if *p < T::zero() && *p >= -tol {
            *p = T::zero();
        } else if *p > T::one() && *p <= T::one() + tol {
            *p = T::one();
        } else if !(*p >= T::zero() && *p <= T::one()) {
            return Err(*p);
        }
    }
    Ok(probs)
}

/// Centre node, stride and weights of a stencil.
type WideStencil<T> = (usize, usize, [T; 3]);

/// Moment-matching stencil around the node nearest `x_j + m`. `None` when the
/// stencil would leave the grid; `Err` carries a bad weight otherwise.
fn wide_stencil<T: Real>(
    nodes: &[T],
    j: usize,
    x_min: T,
    dx: T,
    m: T,
    var: T,
    tol: T,
) -> Option<std::result::Result<WideStencil<T>, T>> {
    let last = nodes.len() - 1;
    let target = ((nodes[j] + m - x_min) / dx).round();
    if !(target >= T::zero() && target <= T::lit(last as f64)) {
        return None;
    }
    let c = target.as_f64() as usize;
    let mu = nodes[j] + m - nodes[c];
    let m2 = var + mu * mu;
    let first = ((m2.sqrt() / dx).ceil().as_f64() as usize).max(1);
    let half = T::lit(0.5);
    let mut first_err = None;
    // The first stride at or above the standard deviation is feasible whenever it
    // exceeds one cell; the next one is tried for round-off at the boundary.
    for stride in first..first + 2 {
        if stride > c || c + stride > last {
            return first_err.map(Err);
        }
        let h = T::lit(stride as f64) * dx;
        let q = m2 / (h * h);
        let r = mu / h;
        match clip([half * (q - r), T::one() - q, half * (q + r)], tol) {
            Ok(probs) => return Some(Ok((c, stride, probs))),
            Err(p) => first_err = first_err.or(Some(p)),
        }
    }
    first_err.map(Err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use std::collections::BTreeMap;

    fn constant(b: f64, s: f64) -> CoefficientSet<f64> {
        CoefficientSet::builder(1, 1.0)
            .drift(move |_, _, o| o[0] = b)
            .diffusion(move |_, _, o| o[0] = s)
            .build()
            .unwrap()
    }

    #[test]
    fn frozen_dynamics_stay_on_node() {
        let spec = constant(0.0, 0.0);
        let grid = TimeGrid::new(0.0, 1.0, 5).unwrap();
        for boundary in [ChainBoundary::Absorbing, ChainBoundary::OneSided] {
            let c = build_chain_with(&spec, &grid, -1.0, 1.0, 10, boundary).unwrap();
            for k in 0..5 {
                for j in 0..11 {
                    let s = c.stencil(k, j);
                    let stay: f64 = (0..3).filter(|&m| s.destination(m) == j).map(|m| s.probs[m]).sum();
                    assert_eq!(stay, 1.0);
                }
            }
        }
    }

    #[test]
    fn pure_diffusion_probabilities() {
        // Moment equations by hand: p_up - p_down = 0, dx^2 (p_up + p_down) = s^2 dt.
        let (s, dt, dx) = (0.5, 0.01, 0.1);
        let spec = constant(0.0, s);
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let c = build_chain(&spec, &grid, -1.0, 1.0, 20).unwrap();
        let expect = s * s * dt / (2.0 * dx * dx);
        let st = c.stencil(3, 10);
        assert!((st.probs[0] - expect).abs() < 1e-14);
        assert!((st.probs[2] - expect).abs() < 1e-14);
        assert!((st.probs[1] - (1.0 - s * s * dt / (dx * dx))).abs() < 1e-14);
    }

    #[test]
    fn catalog_moments_match_euler() {
        let kv: BTreeMap<String, f64> = [("rate", 0.05), ("strike", 100.0), ("vol", 0.2)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let spec: CoefficientSet<f64> = builtin_problem("obstacle_put", &kv).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 2000).unwrap();
        let c = build_chain(&spec, &grid, 20.0, 300.0, 140).unwrap();
        for k in [0, 999, 1999] {
            for j in 1..140 {
                let x = c.nodes()[j];
                let (mean, var) = c.moments(k, j);
                let b = 0.05 * x * grid.dt;
                let v = (0.2 * x).powi(2) * grid.dt;
                assert!((mean - b).abs() < 1e-12, "mean at {j}");
                assert!((var - v).abs() < 1e-12, "var at {j}");
                let s = c.stencil(k, j);
                assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
            assert!(c.is_absorbing(k, 0) && c.is_absorbing(k, 140));
            assert!((1..140).all(|j| c.stencil(k, j).stride == 1));
        }
    }

    #[test]
    fn one_sided_boundary_matches_moments_when_feasible() {
        // Strong inward drift at both ends makes the one-sided stencils feasible.
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .drift(|_, x, o| o[0] = -x[0])
            .diffusion(|_, _, o| o[0] = 0.35)
            .build()
            .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let c = build_chain_with(&spec, &grid, -1.0, 1.0, 20, ChainBoundary::OneSided).unwrap();
        for j in [0, 20] {
            let x = c.nodes()[j];
            let (mean, var) = c.moments(0, j);
            assert!((mean + x * grid.dt).abs() < 1e-12);
            assert!((var - 0.35f64.powi(2) * grid.dt).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_time_steps_use_wide_stencils() {
        // sigma^2 dt / dx^2 = 10: nearest neighbours are infeasible.
        let spec = constant(0.2, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let c = build_chain(&spec, &grid, -3.0, 3.0, 60).unwrap();
        let mut wide = 0;
        for j in 1..60 {
            let s = c.stencil(0, j);
            if s.absorbing {
                assert!(!(6..=54).contains(&j), "node {j} frozen");
                continue;
            }
            wide += 1;
            assert!(s.stride >= 4);
            let (mean, var) = c.moments(0, j);
            assert!((mean - 0.02).abs() < 1e-12);
            assert!((var - 0.1).abs() < 1e-12);
            let f = c.nodes().to_vec();
            let (ew, _) = c.expectation_with_increment(0, j, &f);
            assert!((ew / grid.dt - 1.0).abs() < 1e-12);
        }
        assert!(wide > 45);
    }

    #[test]
    fn infeasible_grid_names_node() {
        // Drift-dominated with no diffusion: no three-node stencil matches.
        let spec = constant(0.5, 0.0);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        match build_chain(&spec, &grid, -1.0, 1.0, 20) {
            Err(Error::InfeasibleDiscretization { time_index, node, .. }) => {
                assert_eq!((time_index, node), (0, 1));
            }
            other => panic!("expected infeasible discretization, got {other:?}"),
        }
        let spec = constant(0.0, 1.0);
        let err =
            build_chain_with(&spec, &TimeGrid::new(0.0, 1.0, 1000).unwrap(), -1.0, 1.0, 20, ChainBoundary::OneSided)
                .unwrap_err();
        assert!(matches!(err, Error::InfeasibleDiscretization { node: 0, .. }));
    }

    #[test]
    fn increment_representation_recovers_sigma_ux() {
        // For f(x) = x the chain gives E[f dW] / dt = sigma exactly.
        let spec = constant(0.3, 0.7);
        let grid = TimeGrid::new(0.0, 1.0, 400).unwrap();
        let c = build_chain(&spec, &grid, -2.0, 2.0, 40).unwrap();
        let f = c.nodes().to_vec();
        let (ew, _) = c.expectation_with_increment(0, 20, &f);
        assert!((ew / grid.dt - 0.7).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let spec = CoefficientSet::<f32>::builder(1, 1.0)
            .diffusion(|_, _, o| o[0] = 0.5)
            .build()
            .unwrap();
        let grid = TimeGrid::new(0.0f32, 1.0, 100).unwrap();
        let c = build_chain(&spec, &grid, -1.0, 1.0, 20).unwrap();
        let s = c.stencil(0, 10);
        assert!((s.probs.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
