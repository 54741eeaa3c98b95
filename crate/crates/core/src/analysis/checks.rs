use serde::{Deserialize, Serialize};

use crate::bsde::PenalizedBsdeSolution;
use crate::error::{Error, Result};
use crate::problem::CoefficientSet;
use crate::scalar::Real;
use crate::surface::ValueSurface;

/// Slack allowed by [`dominance_check`].
pub const DOMINANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceResult {
    pub is_dominated: bool,
    /// `max(u - candidate)` over all nodes; negative when strictly below.
    pub max_excess: f64,
    pub nodes_above: usize,
}

/// Nodewise test `u <= candidate + 1e-10` on a shared grid.
pub fn dominance_check<T: Real>(u: &ValueSurface<T>, candidate: &ValueSurface<T>) -> Result<DominanceResult> {
    if !u.same_grid(candidate) {
        return Err(Error::GridMismatch("dominance_check needs surfaces on identical grids".into()));
    }
    let mut max_excess = f64::NEG_INFINITY;
    let mut nodes_above = 0;
    for (&a, &b) in u.values.iter().zip(&candidate.values) {
        let d = (a - b).as_f64();
        if d > DOMINANCE_TOL {
            nodes_above += 1;
        }
        max_excess = max_excess.max(d);
    }
    Ok(DominanceResult {
        is_dominated: nodes_above == 0,
        max_excess,
        nodes_above,
    })
}

/// Surface on the grid of `like` holding the constant `c` everywhere.
pub fn constant_surface<T: Real>(like: &ValueSurface<T>, c: T) -> ValueSurface<T> {
    let mut out = like.clone();
    out.values.iter_mut().for_each(|v| *v = c);
    out.method = "constant".into();
    out.alpha = None;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkorohodResult {
    pub off_constraint_mass: f64,
    pub total_mass: f64,
    /// `off_constraint_mass / total_mass`, and 0 when no mass was accumulated.
    pub ratio: f64,
}

/// Expected increasing-part mass spent away from the constraint,
/// `E[sum_k 1{Phi(t_k) > eps} (A_{k+1} - A_k)]`, against `E[A_T]`.
///
/// Only obstacle constraints are supported. A general constraint is accepted
/// only when the solution never accumulated any mass, in which case both
/// masses are zero.
pub fn skorohod_flatness<T: Real>(
    sol: &PenalizedBsdeSolution<T>,
    spec: &CoefficientSet<T>,
    eps: T,
) -> Result<SkorohodResult> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let np = sol.n_paths;
    let mut off = 0.0;
    let mut total = 0.0;
    for k in 0..sol.n_steps {
        for p in 0..np {
            let da = (sol.a_at(p, k + 1) - sol.a_at(p, k)).as_f64();
            total += da;
            if sol.phi_at(p, k) > eps {
                off += da;
            }
        }
    }
    let n = np as f64;
    let (off, total) = (off / n, total / n);
    if !spec.form.is_obstacle() && total != 0.0 {
        return Err(Error::Unsupported(format!(
            "Skorohod flatness is only defined for obstacle constraints; `{}` has a general constraint",
            spec.name
        )));
    }
    Ok(SkorohodResult {
        off_constraint_mass: off,
        total_mass: total,
        ratio: if total > 0.0 { off / total } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surface(values: Vec<f64>) -> ValueSurface<f64> {
        ValueSurface::new(vec![0.0, 1.0], vec![0.0, 0.5, 1.0], values).unwrap()
    }

    #[test]
    fn dominance_is_reflexive() {
        let u = surface(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = dominance_check(&u, &u).unwrap();
        assert!(r.is_dominated);
        assert_eq!(r.max_excess, 0.0);
    }

    #[test]
    fn dominance_detects_excess_and_grid_mismatch() {
        let u = surface(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let c = constant_surface(&u, 5.5);
        let r = dominance_check(&u, &c).unwrap();
        assert!(!r.is_dominated);
        assert_eq!(r.nodes_above, 1);
        assert!((r.max_excess - 0.5).abs() < 1e-15);
        let other = ValueSurface::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0; 4]).unwrap();
        assert!(matches!(dominance_check(&u, &other), Err(Error::GridMismatch(_))));
    }

    fn solution(phi: Vec<f64>, a: Vec<f64>) -> PenalizedBsdeSolution<f64> {
        let n = a.len();
        PenalizedBsdeSolution {
            n_paths: 1,
            n_steps: n - 1,
            dim: 1,
            y: vec![0.0; n],
            z: vec![0.0; n],
            a,
            phi,
            alpha: 1.0,
            y0: 0.0,
            y0_stderr: 0.0,
        }
    }

    #[test]
    fn flatness_counts_mass_off_the_constraint() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .obstacle(|_, _| 0.0)
            .build()
            .unwrap();
        let sol = solution(vec![-1.0, 2.0, -0.5, 0.0], vec![0.0, 1.0, 1.5, 2.0]);
        let r = skorohod_flatness(&sol, &spec, 0.1).unwrap();
        assert_eq!(r.total_mass, 2.0);
        assert_eq!(r.off_constraint_mass, 0.5);
        assert_eq!(r.ratio, 0.25);
        let r = skorohod_flatness(&sol, &spec, 1e10).unwrap();
        assert_eq!(r.off_constraint_mass, 0.0);
    }

    #[test]
    fn general_constraint_is_refused_once_active() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .constraint(|_, _, _, _| 1.0, true)
            .build()
            .unwrap();
        let idle = solution(vec![1.0; 3], vec![0.0; 3]);
        let r = skorohod_flatness(&idle, &spec, 0.1).unwrap();
        assert_eq!((r.total_mass, r.ratio), (0.0, 0.0));
        let busy = solution(vec![1.0; 3], vec![0.0, 1.0, 1.0]);
        assert!(matches!(skorohod_flatness(&busy, &spec, 0.1), Err(Error::Unsupported(_))));
    }
}
