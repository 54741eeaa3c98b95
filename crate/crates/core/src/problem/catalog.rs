//! Built-in benchmark problems.
//!
//! Every entry admits a constrained supersolution by construction, so the
//! smallest constrained supersolution exists:
//!
//! * `unconstrained_linear`: `Phi = 1` never binds; the classical solution with
//!   `A = 0` is itself feasible.
//! * `obstacle_put`: `Psi` and `h` are bounded by the strike `K`; since
//!   `g = -r y <= 0` for `y >= 0`, the constant `K` (with `A` absorbing the
//!   drift) is a feasible supersolution.
//! * `z_constraint`: `Psi <= 1` and `g = 0`; the constant `1` has `z = 0` and
//!   `Phi = 1 >= 0`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::problem::CoefficientSet;
use crate::scalar::Real;

/// Catalog identifiers accepted by [`builtin_problem`].
pub const CATALOG: [&str; 3] = ["unconstrained_linear", "obstacle_put", "z_constraint"];

struct Params<'a> {
    problem: &'a str,
    map: &'a BTreeMap<String, f64>,
}

impl Params<'_> {
    fn required(&self, key: &str) -> Result<f64> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingParam {
                problem: self.problem.to_string(),
                key: key.to_string(),
            })
    }

    fn optional(&self, key: &str, default: f64) -> f64 {
        self.map.get(key).copied().unwrap_or(default)
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (key, value) in self.map {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "problem `{}` does not accept parameter `{key}` (allowed: {})",
                    self.problem,
                    allowed.join(", ")
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "parameter `{key}` must be finite, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Instantiate a catalog problem.
///
/// Parameter keys: `rate`, `strike`, `vol` for the lognormal problems and
/// `slope` for `z_constraint`; every entry also accepts `maturity` (default 1)
/// and `spot` (default `strike`, or 0 for `z_constraint`).
pub fn builtin_problem<T: Real>(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> Result<CoefficientSet<T>> {
    let p = Params { problem: name, map: params };
    match name {
        "unconstrained_linear" | "obstacle_put" => {
            p.reject_unknown(&["rate", "strike", "vol", "maturity", "spot"])?;
            let rate = p.required("rate")?;
            let strike = p.required("strike")?;
            let vol = p.required("vol")?;
            let maturity = p.optional("maturity", 1.0);
            let spot = p.optional("spot", strike);
            if vol < 0.0 || strike <= 0.0 || maturity <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "`{name}` needs vol >= 0, strike > 0, maturity > 0"
                )));
            }
            let (r, s, k) = (T::lit(rate), T::lit(vol), T::lit(strike));
            let builder = CoefficientSet::builder(1, T::lit(maturity))
                .name(name)
                .x0(vec![T::lit(spot)])
                .drift(move |_, x, out| out[0] = r * x[0])
                .diffusion(move |_, x, out| out[0] = s * x[0])
                .driver(move |_, _, y, _| -r * y)
                .terminal(move |x| (k - x[0]).max(T::zero()))
                .growth_p(1)
                .params(params.clone());
            let lip_bx = T::lit(rate.abs() + vol);
            let lip_g = T::lit(rate.abs());
            if name == "obstacle_put" {
                builder
                    .obstacle(move |_, x| (k - x[0]).max(T::zero()))
                    .lipschitz(lip_bx, lip_g, T::one())
                    .build()
            } else {
                builder
                    .constraint(|_, _, _, _| T::one(), true)
                    .lipschitz(lip_bx, lip_g, T::zero())
                    .build()
            }
        }
        "z_constraint" => {
            p.reject_unknown(&["slope", "vol", "maturity", "spot"])?;
            let slope = p.required("slope")?;
            let vol = p.optional("vol", 1.0);
            let maturity = p.optional("maturity", 1.0);
            let spot = p.optional("spot", 0.0);
            if slope < 0.0 || vol < 0.0 || maturity <= 0.0 {
                return Err(Error::InvalidInput(
                    "`z_constraint` needs slope >= 0, vol >= 0, maturity > 0".into(),
                ));
            }
            let (c, s) = (T::lit(slope), T::lit(vol));
            CoefficientSet::builder(1, T::lit(maturity))
                .name(name)
                .x0(vec![T::lit(spot)])
                .diffusion(move |_, _, out| out[0] = s)
                .constraint(
                    move |_, _, y, z| y - c * crate::scalar::norm(z),
                    true,
                )
                .terminal(|x| (T::one() - x[0].abs()).max(T::zero()))
                .lipschitz(T::zero(), T::zero(), T::lit(slope.max(1.0)))
                .growth_p(1)
                .params(params.clone())
                .build()
        }
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}
