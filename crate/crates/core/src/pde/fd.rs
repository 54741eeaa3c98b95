//! Theta-scheme finite differences for the penalized and reflected problems.

use crate::bsde::PenaltyTreatment;
use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::pde::{FdBoundary, FdScheme, ProjectionMode};
use crate::problem::CoefficientSet;
use crate::scalar::Real;
use crate::sde::{SpaceGrid, TimeGrid};
use crate::surface::ValueSurface;

/// Acceptance tolerance of the nonlinear iteration at each time level, relative to
/// `max(1, sup |u|)`.
pub const FD_ITERATION_TOL: f64 = 1e-12;
pub const FD_MAX_ITERATIONS: usize = 200;

/// Discretization shared by the penalized, projected and accumulation solvers.
pub(crate) struct Stepper<'a, T> {
    pub spec: &'a CoefficientSet<T>,
    pub scheme: &'a FdScheme,
    pub grid: TimeGrid<T>,
    pub nodes: Vec<T>,
    pub dx: T,
    pub theta: T,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(spec: &'a CoefficientSet<T>, scheme: &'a FdScheme, grid: &TimeGrid<T>) -> Result<Self> {
        spec.require_dim(1)?;
        scheme.validate()?;
        if grid.t_end != spec.horizon {
            return Err(Error::InvalidInput(format!(
                "time grid ends at {} but the problem horizon is {}",
                grid.t_end, spec.horizon
            )));
        }
        let space = SpaceGrid::new(T::lit(scheme.x_min), T::lit(scheme.x_max), scheme.n_space)?;
        let stepper = Self {
            spec,
            scheme,
            grid: *grid,
            nodes: space.nodes(),
            dx: space.dx(),
            theta: T::lit(scheme.theta),
        };
        stepper.check_stability()?;
        Ok(stepper)
    }

    fn n(&self) -> usize {
        self.nodes.len()
    }

    fn dirichlet(&self) -> bool {
        self.scheme.boundary == FdBoundary::DirichletTerminalExtension
    }

    /// Explicit part must satisfy `(1 - theta) dt max |L_jj| <= 1`.
    fn check_stability(&self) -> Result<()> {
        if self.theta == T::one() {
            return Ok(());
        }
        let weight = (T::one() - self.theta) * self.grid.dt;
        for k in 0..=self.grid.n_steps {
            let l = self.operator(self.grid.time(k));
            for (j, &d) in l.diag.iter().enumerate() {
                if weight * d.abs() > T::one() {
                    return Err(Error::Stability(format!(
                        "explicit weight (1 - theta) dt |L_jj| = {} > 1 at t = {}, x = {}; \
                         need dt <= dx^2 / sigma^2 roughly",
                        (weight * d.abs()).as_f64(),
                        self.grid.time(k),
                        self.nodes[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Generator `L u = 1/2 sigma^2 u_xx + b u_x` at time `t`.
    pub fn operator(&self, t: T) -> Tridiagonal<T> {
        let n = self.n();
        let dx = self.dx;
        let dx2 = dx * dx;
        let half = T::lit(0.5);
        let mut l = Tridiagonal::zeros(n);
        for j in 0..n {
            let x = self.nodes[j];
            let b = self.spec.drift_1d(t, x);
            let s = self.spec.sigma_1d(t, x);
            let s2 = s * s;
            if j == 0 || j + 1 == n {
                if self.dirichlet() {
                    continue;
                }
                // u_xx = 0; keep the drift only when it points into the domain.
                if j == 0 && b > T::zero() {
                    l.diag[j] = -b / dx;
                    l.upper[j] = b / dx;
                } else if j + 1 == n && b < T::zero() {
                    l.diag[j] = b / dx;
                    l.lower[j] = -b / dx;
                }
                continue;
            }
            let diff = half * s2 / dx2;
            if b.abs() * dx > s2 {
                l.lower[j] = diff;
                l.upper[j] = diff;
                l.diag[j] = -(diff + diff);
                if b > T::zero() {
                    l.upper[j] += b / dx;
                    l.diag[j] -= b / dx;
                } else {
                    l.lower[j] -= b / dx;
                    l.diag[j] += b / dx;
                }
            } else {
                let adv = half * b / dx;
                l.lower[j] = diff - adv;
                l.upper[j] = diff + adv;
                l.diag[j] = -(diff + diff);
            }
        }
        l
    }

    /// `D_x u` at node `j`: central inside, one-sided at the ends.
    #[inline]
    pub fn gradient(&self, u: &[T], j: usize) -> T {
        let n = self.n();
        if j == 0 {
            (u[1] - u[0]) / self.dx
        } else if j + 1 == n {
            (u[n - 1] - u[n - 2]) / self.dx
        } else {
            (u[j + 1] - u[j - 1]) / (self.dx + self.dx)
        }
    }

    /// `z = sigma(t, x) D_x u`.
    #[inline]
    pub fn z(&self, t: T, u: &[T], j: usize) -> T {
        self.spec.sigma_1d(t, self.nodes[j]) * self.gradient(u, j)
    }

    fn is_frozen(&self, j: usize) -> bool {
        self.dirichlet() && (j == 0 || j + 1 == self.n())
    }

    pub fn terminal_row(&self) -> Result<Vec<T>> {
        self.nodes
            .iter()
            .map(|&x| {
                let v = self.spec.terminal(&[x]);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Evaluation {
                        coefficient: "terminal".into(),
                        input: format!("x = {x}"),
                    })
                }
            })
            .collect()
    }

    /// `M = I - theta dt L_i` and the linear right-hand side
    /// `u_{i+1} + (1 - theta) dt L_{i+1} u_{i+1}`, with frozen boundary rows.
    pub fn linear_step(&self, i: usize, next: &[T]) -> (Tridiagonal<T>, Vec<T>) {
        let n = self.n();
        let dt = self.grid.dt;
        let li = self.operator(self.grid.time(i));
        let mut m = Tridiagonal::zeros(n);
        for j in 0..n {
            m.lower[j] = -self.theta * dt * li.lower[j];
            m.diag[j] = T::one() - self.theta * dt * li.diag[j];
            m.upper[j] = -self.theta * dt * li.upper[j];
        }
        let mut rhs = next.to_vec();
        if self.theta < T::one() {
            let ln = self.operator(self.grid.time(i + 1));
            let mut lu = vec![T::zero(); n];
            ln.apply(next, &mut lu);
            let w = (T::one() - self.theta) * dt;
            for (r, v) in rhs.iter_mut().zip(&lu) {
                *r += w * *v;
            }
        }
        for j in [0, n - 1] {
            if self.is_frozen(j) {
                m.lower[j] = T::zero();
                m.upper[j] = T::zero();
                m.diag[j] = T::one();
                rhs[j] = self.spec.terminal(&[self.nodes[j]]);
            }
        }
        (m, rhs)
    }

    /// Driver `g + alpha Phi^-` at `(t_i, x_j, v_j, sigma D_x v)`.
    #[inline]
    fn nonlinear(&self, t: T, v: &[T], j: usize, y: T, alpha: T) -> T {
        let z = self.z(t, v, j);
        self.spec.penalized_driver(t, &[self.nodes[j]], y, &[z], alpha)
    }

    /// One time level of the penalized scheme.
    pub fn penalized_step(&self, i: usize, next: &[T], alpha: T) -> Result<Vec<T>> {
        let (m, rhs) = self.linear_step(i, next);
        let n = self.n();
        let dt = self.grid.dt;
        let t = self.grid.time(i);
        let mut x = vec![T::zero(); n];
        let mut scratch = vec![T::zero(); n];
        match self.scheme.penalty {
            PenaltyTreatment::ExplicitLagged => {
                let mut r = rhs;
                for j in 0..n {
                    if !self.is_frozen(j) {
                        r[j] += dt * self.nonlinear(t, next, j, next[j], alpha);
                    }
                }
                m.solve_into(&r, &mut x, &mut scratch)?;
                Ok(x)
            }
            PenaltyTreatment::SemiImplicit => {
                let mut v = next.to_vec();
                let mut sys = m.clone();
                let mut r = rhs.clone();
                let mut conv = Convergence::new();
                for _ in 0..FD_MAX_ITERATIONS {
                    for j in 0..n {
                        sys.diag[j] = m.diag[j];
                        r[j] = rhs[j];
                        if self.is_frozen(j) {
                            continue;
                        }
                        let (nv, c) = self.linearize(t, &v, j, alpha);
                        sys.diag[j] += dt * c;
                        r[j] += dt * (nv + c * v[j]);
                    }
                    sys.solve_into(&r, &mut x, &mut scratch)?;
                    if conv.check(&x, &v) {
                        return Ok(x);
                    }
                    std::mem::swap(&mut v, &mut x);
                }
                if conv.within_tol {
                    return Ok(v);
                }
                Err(Error::FixedPoint {
                    time_index: i,
                    iterations: FD_MAX_ITERATIONS,
                })
            }
        }
    }

    /// Value of the driver at `v_j` and a nonnegative damping slope
    /// `c >= -dN/dy` from the steeper one-sided difference.
    fn linearize(&self, t: T, v: &[T], j: usize, alpha: T) -> (T, T) {
        let y = v[j];
        let nv = self.nonlinear(t, v, j, y, alpha);
        let delta = T::lit(1e-7) * y.abs().max(T::one());
        let up = self.nonlinear(t, v, j, y + delta, alpha);
        let down = self.nonlinear(t, v, j, y - delta, alpha);
        let c = (-(up - nv) / delta).max(-(nv - down) / delta).max(T::zero());
        (nv, c)
    }

    /// One time level of the reflected scheme.
    ///
    /// Returns the new row and, per node, the projection increment.
    pub fn projected_step(&self, i: usize, next: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let n = self.n();
        let t = self.grid.time(i);
        let h: Vec<T> = self
            .nodes
            .iter()
            .map(|&x| self.spec.obstacle(t, &[x]).expect("obstacle form"))
            .collect();
        let free = self.penalized_step(i, next, T::zero())?;
        if free.iter().zip(&h).all(|(u, h)| u >= h) {
            return Ok((free, vec![T::zero(); n]));
        }
        match self.scheme.projection {
            ProjectionMode::Splitting => {
                let out: Vec<T> = free.iter().zip(&h).map(|(&u, &h)| u.max(h)).collect();
                let inc = out.iter().zip(&free).map(|(&a, &b)| a - b).collect();
                Ok((out, inc))
            }
            ProjectionMode::Complementarity => self.complementarity_step(i, next, free, &h),
        }
    }

    /// Solve `min(B w - f, w - h) = 0` with `B, f` the linearized implicit step,
    /// by policy iteration inside the driver linearization loop.
    fn complementarity_step(
        &self,
        i: usize,
        next: &[T],
        free: Vec<T>,
        h: &[T],
    ) -> Result<(Vec<T>, Vec<T>)> {
        let n = self.n();
        let dt = self.grid.dt;
        let t = self.grid.time(i);
        let (m, rhs) = self.linear_step(i, next);
        let mut v: Vec<T> = free.iter().zip(h).map(|(&u, &h)| u.max(h)).collect();
        let mut active: Vec<bool> = free.iter().zip(h).map(|(u, h)| u < h).collect();
        let mut b = m.clone();
        let mut f = rhs.clone();
        let mut sys = Tridiagonal::zeros(n);
        let mut r = vec![T::zero(); n];
        let mut w = vec![T::zero(); n];
        let mut scratch = vec![T::zero(); n];
        let mut bw = vec![T::zero(); n];
        let mut conv = Convergence::new();
        for _ in 0..FD_MAX_ITERATIONS {
            for j in 0..n {
                b.diag[j] = m.diag[j];
                f[j] = rhs[j];
                if self.is_frozen(j) {
                    continue;
                }
                let (nv, c) = self.linearize(t, &v, j, T::zero());
                b.diag[j] += dt * c;
                f[j] += dt * (nv + c * v[j]);
            }
            let mut settled = false;
            for _ in 0..n + 2 {
                for j in 0..n {
                    if active[j] {
                        sys.lower[j] = T::zero();
                        sys.diag[j] = T::one();
                        sys.upper[j] = T::zero();
                        r[j] = h[j];
                    } else {
                        sys.lower[j] = b.lower[j];
                        sys.diag[j] = b.diag[j];
                        sys.upper[j] = b.upper[j];
                        r[j] = f[j];
                    }
                }
                sys.solve_into(&r, &mut w, &mut scratch)?;
                b.apply(&w, &mut bw);
                let mut changed = false;
                for j in 0..n {
                    let pde = bw[j] - f[j];
                    let obs = w[j] - h[j];
                    let want = if active[j] { obs <= pde } else { obs < pde };
                    if want != active[j] {
                        active[j] = want;
                        changed = true;
                    }
                }
                if !changed {
                    settled = true;
                    break;
                }
            }
            if !settled {
                return Err(Error::FixedPoint {
                    time_index: i,
                    iterations: n + 2,
                });
            }
            if conv.check(&w, &v) {
                let inc = (0..n)
                    .map(|j| if active[j] { (bw[j] - f[j]).max(T::zero()) } else { T::zero() })
                    .collect();
                return Ok((w, inc));
            }
            std::mem::swap(&mut v, &mut w);
        }
        Err(Error::FixedPoint {
            time_index: i,
            iterations: FD_MAX_ITERATIONS,
        })
    }

    pub fn surface(&self, values: Vec<T>) -> Result<ValueSurface<T>> {
        ValueSurface::new(self.grid.times(), self.nodes.clone(), values)
    }
}

/// Stopping rule of the nonlinear iterations: accept at machine precision, or
/// once the change is within tolerance and has stopped shrinking.
struct Convergence<T> {
    last: T,
    within_tol: bool,
}

impl<T: Real> Convergence<T> {
    fn new() -> Self {
        Self {
            last: T::infinity(),
            within_tol: false,
        }
    }

    fn check(&mut self, new: &[T], old: &[T]) -> bool {
        let mut change = T::zero();
        let mut scale = T::one();
        for (&a, &b) in new.iter().zip(old) {
            change = change.max((a - b).abs());
            scale = scale.max(a.abs());
        }
        let floor = T::epsilon() * T::lit(4.0) * scale;
        self.within_tol = change <= T::lit(FD_ITERATION_TOL) * scale;
        let done = change <= floor || (self.within_tol && change >= self.last);
        self.last = change;
        done
    }
}

/// Penalized value surface `u_alpha` of `-u_t - L u - g - alpha Phi^- = 0`.
pub fn solve_penalized_fd<T: Real>(
    spec: &CoefficientSet<T>,
    scheme: &FdScheme,
    grid: &TimeGrid<T>,
    alpha: T,
) -> Result<ValueSurface<T>> {
    if !(alpha >= T::zero()) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let st = Stepper::new(spec, scheme, grid)?;
    if scheme.penalty == PenaltyTreatment::ExplicitLagged {
        let q = spec.stiffness(grid.dt, alpha);
        if q > T::one() {
            return Err(Error::StepSize {
                stiffness: q.as_f64(),
                limit: 1.0,
            });
        }
    } else if alpha > T::zero() && !spec.form.monotone_in_y() {
        return Err(Error::InvalidInput(
            "semi-implicit penalty needs a constraint nondecreasing in y".into(),
        ));
    }
    let n = grid.n_steps;
    let nx = st.nodes.len();
    let mut values = vec![T::zero(); (n + 1) * nx];
    values[n * nx..].copy_from_slice(&st.terminal_row()?);
    for i in (0..n).rev() {
        let (head, tail) = values.split_at_mut((i + 1) * nx);
        let row = st.penalized_step(i, &tail[..nx], alpha)?;
        check_finite(&row, i)?;
        head[i * nx..].copy_from_slice(&row);
    }
    Ok(st
        .surface(values)?
        .tagged(&spec.name, "fd", scheme.boundary.label(), Some(alpha.as_f64())))
}

/// Reflected value surface for an obstacle-form constraint `Phi = y - h`.
pub fn solve_projected_obstacle_fd<T: Real>(
    spec: &CoefficientSet<T>,
    scheme: &FdScheme,
    grid: &TimeGrid<T>,
) -> Result<ValueSurface<T>> {
    if !spec.form.is_obstacle() {
        return Err(Error::Shape(format!(
            "problem `{}` does not have an obstacle-form constraint",
            spec.name
        )));
    }
    let st = Stepper::new(spec, scheme, grid)?;
    let n = grid.n_steps;
    let nx = st.nodes.len();
    let mut values = vec![T::zero(); (n + 1) * nx];
    values[n * nx..].copy_from_slice(&st.terminal_row()?);
    for i in (0..n).rev() {
        let (head, tail) = values.split_at_mut((i + 1) * nx);
        let (row, _) = st.projected_step(i, &tail[..nx])?;
        check_finite(&row, i)?;
        head[i * nx..].copy_from_slice(&row);
    }
    Ok(st
        .surface(values)?
        .tagged(&spec.name, "fd_projected", scheme.boundary.label(), None))
}

/// Expected remaining increasing part `E[A_T - A_{t_i} | X_{t_i} = x_j]` of
/// an fd surface.
///
/// The per-step increment is `dt alpha Phi^-` for a penalized surface (one
/// carrying `alpha`) and, for a reflected one, the projection amount
/// `max(0, M u_i - rhs(u_{i+1}) - dt g(u_i))`. It is
/// propagated backward with the same linear operator and no discounting.
/// With `off_constraint_eps = Some(eps)` only increments at nodes where
/// `Phi(t, x, u, z) > eps` are counted.
pub fn fd_accumulation<T: Real>(
    spec: &CoefficientSet<T>,
    scheme: &FdScheme,
    grid: &TimeGrid<T>,
    surface: &ValueSurface<T>,
    off_constraint_eps: Option<T>,
) -> Result<ValueSurface<T>> {
    let st = Stepper::new(spec, scheme, grid)?;
    let n = grid.n_steps;
    let nx = st.nodes.len();
    if surface.n_times() != n + 1 || surface.xs != st.nodes {
        return Err(Error::GridMismatch("surface is not defined on the scheme grid".into()));
    }
    let dt = grid.dt;
    let penalty = surface.alpha.map(|a| (T::lit(a), scheme.penalty));
    let mut acc = vec![T::zero(); (n + 1) * nx];
    let mut mu = vec![T::zero(); nx];
    let mut x = vec![T::zero(); nx];
    let mut scratch = vec![T::zero(); nx];
    for i in (0..n).rev() {
        let t = grid.time(i);
        let (m, rhs) = st.linear_step(i, surface.row(i + 1));
        let cur = surface.row(i);
        m.apply(cur, &mut mu);
        let (ma, mut ra) = st.linear_step(i, &acc[(i + 1) * nx..(i + 2) * nx]);
        for j in 0..nx {
            if st.is_frozen(j) {
                ra[j] = T::zero();
                continue;
            }
            let z = st.z(t, cur, j);
            let x = [st.nodes[j]];
            if let Some(eps) = off_constraint_eps {
                if !(spec.constraint(t, &x, cur[j], &[z]) > eps) {
                    continue;
                }
            }
            ra[j] += match penalty {
                Some((alpha, PenaltyTreatment::SemiImplicit)) => {
                    dt * alpha * spec.constraint(t, &x, cur[j], &[z]).neg_part()
                }
                Some((alpha, PenaltyTreatment::ExplicitLagged)) => {
                    let next = surface.row(i + 1);
                    dt * alpha * spec.constraint(t, &x, next[j], &[st.z(t, next, j)]).neg_part()
                }
                None => {
                    let g = spec.driver(t, &x, cur[j], &[z]);
                    (mu[j] - rhs[j] - dt * g).max(T::zero())
                }
            };
        }
        ma.solve_into(&ra, &mut x, &mut scratch)?;
        acc[i * nx..(i + 1) * nx].copy_from_slice(&x);
    }
    let mut out = st.surface(acc)?;
    out.problem = spec.name.clone();
    out.method = "fd_accumulation".into();
    out.boundary = scheme.boundary.label().into();
    out.alpha = surface.alpha;
    Ok(out)
}

fn check_finite<T: Real>(row: &[T], i: usize) -> Result<()> {
    if row.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Stability(format!("non-finite value at time index {i}")))
    }
}
