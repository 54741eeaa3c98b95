//! One-dimensional finite-difference solvers for the penalized PDE
//! `u_t + 1/2 sigma^2 u_xx + b u_x + g + alpha Phi^- = 0`, the reflected
//! (obstacle) problem, and closed-form oracles for the linear benchmark.

mod closed_form;
mod fd;
mod refine;

use serde::{Deserialize, Serialize};

use crate::bsde::PenaltyTreatment;
use crate::error::{Error, Result};

pub use closed_form::{closed_form_linear, lognormal_quadrature, LinearParams, Payoff};
pub use fd::{
    fd_accumulation, solve_penalized_fd, solve_projected_obstacle_fd, FD_ITERATION_TOL,
    FD_MAX_ITERATIONS,
};
pub use refine::{refine_study, RefineRow, RefineTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdBoundary {
    /// End nodes keep `u = Psi` for all times.
    DirichletTerminalExtension,
    /// End rows impose `u_xx = 0`; the drift term is kept only when it points inward.
    #[default]
    LinearExtrapolation,
}

impl FdBoundary {
    pub fn label(self) -> &'static str {
        match self {
            FdBoundary::DirichletTerminalExtension => "dirichlet_terminal_extension",
            FdBoundary::LinearExtrapolation => "linear_extrapolation",
        }
    }
}

/// How the reflected solver enforces `u >= h` at each time level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Solve the discrete complementarity problem `min(B u - f, u - h) = 0`.
    #[default]
    Complementarity,
    /// Unconstrained step followed by `u <- max(u, h)`.
    Splitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdScheme {
    /// 0 explicit, 1 implicit, 0.5 Crank-Nicolson.
    pub theta: f64,
    pub penalty: PenaltyTreatment,
    pub x_min: f64,
    pub x_max: f64,
    /// Number of space intervals.
    pub n_space: usize,
    #[serde(default)]
    pub boundary: FdBoundary,
    #[serde(default)]
    pub projection: ProjectionMode,
}

impl FdScheme {
    /// Implicit, semi-implicit penalty, linear-extrapolation boundary.
    pub fn implicit(x_min: f64, x_max: f64, n_space: usize) -> Self {
        Self {
            theta: 1.0,
            penalty: PenaltyTreatment::SemiImplicit,
            x_min,
            x_max,
            n_space,
            boundary: FdBoundary::LinearExtrapolation,
            projection: ProjectionMode::Complementarity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidInput(format!("theta must be in [0, 1], got {}", self.theta)));
        }
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "space domain needs finite x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.n_space < 4 {
            return Err(Error::InvalidInput("n_space must be at least 4".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::CoefficientSet;
    use crate::sde::TimeGrid;

    fn constants(c: f64) -> CoefficientSet<f64> {
        CoefficientSet::builder(1, 1.0)
            .terminal(move |_| c)
            .build()
            .unwrap()
    }

    #[test]
    fn constants_solve_every_scheme() {
        let spec = constants(2.5);
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        for theta in [0.0, 0.5, 1.0] {
            for penalty in [PenaltyTreatment::SemiImplicit, PenaltyTreatment::ExplicitLagged] {
                let mut scheme = FdScheme::implicit(-1.0, 1.0, 10);
                scheme.theta = theta;
                scheme.penalty = penalty;
                for alpha in [0.0, 5.0] {
                    let u = solve_penalized_fd(&spec, &scheme, &grid, alpha).unwrap();
                    assert!(u.values.iter().all(|&v| v == 2.5));
                }
            }
        }
    }

    #[test]
    fn explicit_scheme_checks_stability() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .diffusion(|_, _, o| o[0] = 1.0)
            .build()
            .unwrap();
        let mut scheme = FdScheme::implicit(-1.0, 1.0, 40);
        scheme.theta = 0.0;
        // dx = 0.05, dx^2 = 0.0025 < dt = 0.01
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        assert!(matches!(
            solve_penalized_fd(&spec, &scheme, &grid, 0.0).unwrap_err(),
            Error::Stability(_)
        ));
        let fine = TimeGrid::new(0.0, 1.0, 400).unwrap();
        assert!(solve_penalized_fd(&spec, &scheme, &fine, 0.0).is_ok());
    }

    #[test]
    fn stationary_obstacle_is_a_fixed_point() {
        let h = |x: f64| (0.5 - x * x).max(0.0);
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .obstacle(move |_, x| h(x[0]))
            .terminal(move |x| h(x[0]))
            .lipschitz(0.0, 0.0, 1.0)
            .build()
            .unwrap();
        let scheme = FdScheme::implicit(-1.0, 1.0, 20);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let u = solve_projected_obstacle_fd(&spec, &scheme, &grid).unwrap();
        for i in 0..u.n_times() {
            for (j, &x) in u.xs.iter().enumerate() {
                assert_eq!(u.at(i, j), h(x));
            }
        }
    }

    #[test]
    fn unreachable_obstacle_matches_unpenalized_bitwise() {
        let spec: CoefficientSet<f64> = crate::problem::builtin_problem(
            "obstacle_put",
            &[("rate", 0.05), ("strike", 100.0), ("vol", 0.2)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
        .unwrap()
        .with_shifted_obstacle(-1e10)
        .unwrap();
        let scheme = FdScheme::implicit(20.0, 500.0, 120);
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let projected = solve_projected_obstacle_fd(&spec, &scheme, &grid).unwrap();
        let free = solve_penalized_fd(&spec, &scheme, &grid, 0.0).unwrap();
        assert_eq!(projected.values, free.values);
        let mut split = scheme;
        split.projection = ProjectionMode::Splitting;
        let projected = solve_projected_obstacle_fd(&spec, &split, &grid).unwrap();
        assert_eq!(projected.values, free.values);
    }

    #[test]
    fn projected_needs_obstacle() {
        let spec = constants(1.0);
        let scheme = FdScheme::implicit(-1.0, 1.0, 10);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert!(matches!(
            solve_projected_obstacle_fd(&spec, &scheme, &grid).unwrap_err(),
            Error::Shape(_)
        ));
    }

    #[test]
    fn dirichlet_boundary_holds_terminal_values() {
        let spec: CoefficientSet<f64> = crate::problem::builtin_problem(
            "unconstrained_linear",
            &[("rate", 0.05), ("strike", 100.0), ("vol", 0.2)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
        .unwrap();
        let mut scheme = FdScheme::implicit(20.0, 500.0, 96);
        scheme.boundary = FdBoundary::DirichletTerminalExtension;
        let grid = TimeGrid::new(0.0, 1.0, 40).unwrap();
        let u = solve_penalized_fd(&spec, &scheme, &grid, 0.0).unwrap();
        for i in 0..u.n_times() {
            assert_eq!(u.at(i, 0), 80.0);
            assert_eq!(u.at(i, 96), 0.0);
        }
    }
}
