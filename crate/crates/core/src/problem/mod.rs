//! Constrained-BSDE problem instances.
//!
//! A [`CoefficientSet`] bundles the forward dynamics `dX = b dt + sigma dW`,
//! the driver `g(t, x, y, z)`, the constraint `Phi(t, x, y, z) >= 0` and the
//! terminal condition `Psi(x)`, together with the Lipschitz and growth
//! constants the caller declares for them.

mod catalog;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use catalog::{builtin_problem, CATALOG};
pub use validate::{validate_problem, ValidationReport, Violation, LIPSCHITZ_SLACK};

/// `(t, x, out)`: writes a `dim` vector.
pub type VectorField<T> = Arc<dyn Fn(T, &[T], &mut [T]) + Send + Sync>;
/// `(t, x, out)`: writes a row-major `dim x dim` matrix.
pub type MatrixField<T> = Arc<dyn Fn(T, &[T], &mut [T]) + Send + Sync>;
/// `(t, x, y, z) -> value`; used for both the driver and the constraint.
pub type ScalarField<T> = Arc<dyn Fn(T, &[T], T, &[T]) -> T + Send + Sync>;
pub type TerminalFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type ObstacleFn<T> = Arc<dyn Fn(T, &[T]) -> T + Send + Sync>;

/// Structural information about the constraint.
#[derive(Clone)]
pub enum ConstraintForm<T> {
    /// Arbitrary Lipschitz constraint. `monotone_in_y` declares that
    /// `y -> Phi(t, x, y, z)` is nondecreasing, which the semi-implicit
    /// penalty treatments rely on.
    General { monotone_in_y: bool },
    /// Reflection form `Phi(t, x, y, z) = y - h(t, x)`.
    Obstacle(ObstacleFn<T>),
}

impl<T> ConstraintForm<T> {
    pub fn is_obstacle(&self) -> bool {
        matches!(self, ConstraintForm::Obstacle(_))
    }

    pub fn monotone_in_y(&self) -> bool {
        match self {
            ConstraintForm::General { monotone_in_y } => *monotone_in_y,
            ConstraintForm::Obstacle(_) => true,
        }
    }
}

/// The data `(b, sigma, g, Phi, Psi)` of a constrained BSDE plus declared constants.
#[derive(Clone)]
pub struct CoefficientSet<T> {
    pub name: String,
    pub dim: usize,
    pub horizon: T,
    /// Reference starting point used for `u(t0, x0)` read-outs.
    pub x0: Vec<T>,
    drift: VectorField<T>,
    diffusion: MatrixField<T>,
    driver: ScalarField<T>,
    constraint: ScalarField<T>,
    terminal: TerminalFn<T>,
    pub form: ConstraintForm<T>,
    /// Joint Lipschitz constant of `b` and `sigma` in `x`.
    pub lip_bx: T,
    /// Lipschitz constant of `g` in `(y, z)`.
    pub lip_g: T,
    /// Lipschitz constant of `Phi` in `(y, z)`.
    pub lip_phi: T,
    pub growth_p: u32,
    /// Scalar parameters a catalog instance was built from.
    pub params: BTreeMap<String, f64>,
}

impl<T: Real> fmt::Debug for CoefficientSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("x0", &self.x0)
            .field("obstacle", &self.form.is_obstacle())
            .field("lip_bx", &self.lip_bx)
            .field("lip_g", &self.lip_g)
            .field("lip_phi", &self.lip_phi)
            .field("growth_p", &self.growth_p)
            .field("params", &self.params)
            .finish()
    }
}

impl<T: Real> CoefficientSet<T> {
    pub fn builder(dim: usize, horizon: T) -> CoefficientSetBuilder<T> {
        CoefficientSetBuilder::new(dim, horizon)
    }

    #[inline]
    pub fn drift(&self, t: T, x: &[T], out: &mut [T]) {
        (self.drift)(t, x, out)
    }

    #[inline]
    pub fn diffusion(&self, t: T, x: &[T], out: &mut [T]) {
        (self.diffusion)(t, x, out)
    }

    #[inline]
    pub fn driver(&self, t: T, x: &[T], y: T, z: &[T]) -> T {
        (self.driver)(t, x, y, z)
    }

    #[inline]
    pub fn constraint(&self, t: T, x: &[T], y: T, z: &[T]) -> T {
        (self.constraint)(t, x, y, z)
    }

    #[inline]
    pub fn terminal(&self, x: &[T]) -> T {
        (self.terminal)(x)
    }

    /// The obstacle `h(t, x)` when the constraint has reflection form.
    pub fn obstacle(&self, t: T, x: &[T]) -> Option<T> {
        match &self.form {
            ConstraintForm::Obstacle(h) => Some(h(t, x)),
            ConstraintForm::General { .. } => None,
        }
    }

    /// Penalized driver `g + alpha * Phi^-`.
    #[inline]
    pub fn penalized_driver(&self, t: T, x: &[T], y: T, z: &[T], alpha: T) -> T {
        let g = self.driver(t, x, y, z);
        if alpha == T::zero() {
            g
        } else {
            g + alpha * self.constraint(t, x, y, z).neg_part()
        }
    }

    /// Scalar drift for one-dimensional problems.
    #[inline]
    pub fn drift_1d(&self, t: T, x: T) -> T {
        let mut out = [T::zero()];
        self.drift(t, &[x], &mut out);
        out[0]
    }

    /// Scalar volatility for one-dimensional problems.
    #[inline]
    pub fn sigma_1d(&self, t: T, x: T) -> T {
        let mut out = [T::zero()];
        self.diffusion(t, &[x], &mut out);
        out[0]
    }

    /// Stiffness `dt * (mu + alpha * mu2)` of the penalized driver in `y`.
    pub fn stiffness(&self, dt: T, alpha: T) -> T {
        dt * (self.lip_g + alpha * self.lip_phi)
    }

    pub fn require_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Shape(format!(
                "problem `{}` has dimension {}, this solver requires {}",
                self.name, self.dim, dim
            )));
        }
        Ok(())
    }

    /// Copy of this problem whose obstacle is shifted by `shift`.
    ///
    /// Only defined for reflection-form constraints.
    pub fn with_shifted_obstacle(&self, shift: T) -> Result<Self> {
        let h = match &self.form {
            ConstraintForm::Obstacle(h) => h.clone(),
            ConstraintForm::General { .. } => {
                return Err(Error::Shape(format!(
                    "problem `{}` does not have an obstacle-form constraint",
                    self.name
                )))
            }
        };
        let shifted: ObstacleFn<T> = Arc::new(move |t, x| h(t, x) + shift);
        let mut out = self.clone();
        out.name = format!("{}+shift({})", self.name, shift);
        out.constraint = obstacle_constraint(shifted.clone());
        out.form = ConstraintForm::Obstacle(shifted);
        Ok(out)
    }
}

fn obstacle_constraint<T: Real>(h: ObstacleFn<T>) -> ScalarField<T> {
    Arc::new(move |t, x, y, _z| y - h(t, x))
}

/// Builder for user-defined problems; unset coefficients default to zero
/// dynamics, zero driver, the never-binding constraint `Phi = 1` and `Psi = 0`.
pub struct CoefficientSetBuilder<T> {
    inner: CoefficientSet<T>,
}

impl<T: Real> CoefficientSetBuilder<T> {
    fn new(dim: usize, horizon: T) -> Self {
        Self {
            inner: CoefficientSet {
                name: "custom".to_string(),
                dim,
                horizon,
                x0: vec![T::zero(); dim],
                drift: Arc::new(|_, _, out: &mut [T]| out.fill(T::zero())),
                diffusion: Arc::new(|_, _, out: &mut [T]| out.fill(T::zero())),
                driver: Arc::new(|_, _, _, _| T::zero()),
                constraint: Arc::new(|_, _, _, _| T::one()),
                terminal: Arc::new(|_| T::zero()),
                form: ConstraintForm::General {
                    monotone_in_y: true,
                },
                lip_bx: T::zero(),
                lip_g: T::zero(),
                lip_phi: T::zero(),
                growth_p: 0,
                params: BTreeMap::new(),
            },
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.inner.name = name.into();
        self
    }

    pub fn x0(mut self, x0: Vec<T>) -> Self {
        self.inner.x0 = x0;
        self
    }

    pub fn drift(mut self, f: impl Fn(T, &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.inner.drift = Arc::new(f);
        self
    }

    pub fn diffusion(mut self, f: impl Fn(T, &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.inner.diffusion = Arc::new(f);
        self
    }

    pub fn driver(mut self, f: impl Fn(T, &[T], T, &[T]) -> T + Send + Sync + 'static) -> Self {
        self.inner.driver = Arc::new(f);
        self
    }

    /// General constraint; `monotone_in_y` declares `y -> Phi` nondecreasing.
    pub fn constraint(
        mut self,
        f: impl Fn(T, &[T], T, &[T]) -> T + Send + Sync + 'static,
        monotone_in_y: bool,
    ) -> Self {
        self.inner.constraint = Arc::new(f);
        self.inner.form = ConstraintForm::General { monotone_in_y };
        self
    }

    /// Reflection constraint `Phi = y - h(t, x)`.
    pub fn obstacle(mut self, h: impl Fn(T, &[T]) -> T + Send + Sync + 'static) -> Self {
        let h: ObstacleFn<T> = Arc::new(h);
        self.inner.constraint = obstacle_constraint(h.clone());
        self.inner.form = ConstraintForm::Obstacle(h);
        self
    }

    pub fn terminal(mut self, f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        self.inner.terminal = Arc::new(f);
        self
    }

    pub fn lipschitz(mut self, lip_bx: T, lip_g: T, lip_phi: T) -> Self {
        self.inner.lip_bx = lip_bx;
        self.inner.lip_g = lip_g;
        self.inner.lip_phi = lip_phi;
        self
    }

    pub fn growth_p(mut self, p: u32) -> Self {
        self.inner.growth_p = p;
        self
    }

    pub fn params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.inner.params = params;
        self
    }

    pub fn build(self) -> Result<CoefficientSet<T>> {
        let s = self.inner;
        if s.dim == 0 {
            return Err(Error::InvalidInput("dim must be at least 1".into()));
        }
        if !(s.horizon > T::zero()) || !s.horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive and finite, got {}",
                s.horizon
            )));
        }
        if s.x0.len() != s.dim {
            return Err(Error::Shape(format!(
                "x0 has length {}, expected {}",
                s.x0.len(),
                s.dim
            )));
        }
        for (label, c) in [("lip_bx", s.lip_bx), ("lip_g", s.lip_g), ("lip_phi", s.lip_phi)] {
            if !(c >= T::zero()) || !c.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{label} must be a nonnegative finite constant, got {c}"
                )));
            }
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_rejects_bad_shapes() {
        assert!(CoefficientSet::<f64>::builder(0, 1.0).build().is_err());
        assert!(CoefficientSet::<f64>::builder(1, 0.0).build().is_err());
        assert!(CoefficientSet::<f64>::builder(2, 1.0)
            .x0(vec![1.0])
            .build()
            .is_err());
        assert!(CoefficientSet::<f64>::builder(1, 1.0)
            .lipschitz(-1.0, 0.0, 0.0)
            .build()
            .is_err());
    }

    #[test]
    fn defaults_never_bind() {
        let s = CoefficientSet::<f64>::builder(1, 1.0).build().unwrap();
        assert_eq!(s.constraint(0.3, &[2.0], -5.0, &[1.0]), 1.0);
        assert_eq!(s.penalized_driver(0.3, &[2.0], -5.0, &[1.0], 1e6), 0.0);
    }

    #[test]
    fn shifted_obstacle() {
        let s = CoefficientSet::<f64>::builder(1, 1.0)
            .obstacle(|_, x| (1.0 - x[0]).max(0.0))
            .build()
            .unwrap();
        let lowered = s.with_shifted_obstacle(-5.0).unwrap();
        assert_eq!(lowered.obstacle(0.0, &[0.0]), Some(-4.0));
        assert_eq!(lowered.constraint(0.0, &[0.0], 0.0, &[0.0]), 4.0);
        let general = CoefficientSet::<f64>::builder(1, 1.0).build().unwrap();
        assert!(general.with_shifted_obstacle(1.0).is_err());
    }
}
