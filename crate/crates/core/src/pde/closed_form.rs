//! Closed-form value of the unconstrained linear benchmark.
//!
//! With `dX = r X dt + s X dW` and `g = -r y`, the BSDE value is the
//! discounted expectation `e^{-rT} E[Psi(X_T)]`, `X_T = x0 exp((r - s^2/2) T + s sqrt(T) N)`.
//! For the put payoff `(K - x)^+` this is
//!
//! ```text
//! K e^{-rT} N(-d2) - x0 N(-d1),
//! d1 = (ln(x0 / K) + (r + s^2 / 2) T) / (s sqrt(T)),   d2 = d1 - s sqrt(T).
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payoff {
    /// `(K - x)^+`.
    #[default]
    Put,
    /// `Psi = 1`.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub rate: f64,
    pub vol: f64,
    pub strike: f64,
    pub x0: f64,
    pub maturity: f64,
    pub payoff: Payoff,
}

impl LinearParams {
    /// Read `rate`, `vol`, `strike`, `spot`, `maturity` from catalog parameters.
    pub fn from_catalog(params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str| {
            params.get(k).copied().ok_or_else(|| Error::MissingParam {
                problem: "unconstrained_linear".into(),
                key: k.into(),
            })
        };
        let strike = get("strike")?;
        Ok(Self {
            rate: get("rate")?,
            vol: get("vol")?,
            strike,
            x0: params.get("spot").copied().unwrap_or(strike),
            maturity: params.get("maturity").copied().unwrap_or(1.0),
            payoff: Payoff::Put,
        })
    }

    fn check(&self) -> Result<()> {
        if !(self.vol > 0.0) {
            return Err(Error::InvalidInput(format!("vol must be > 0, got {}", self.vol)));
        }
        if !(self.maturity > 0.0) {
            return Err(Error::InvalidInput(format!(
                "maturity must be > 0, got {}",
                self.maturity
            )));
        }
        if !(self.x0 > 0.0) {
            return Err(Error::InvalidInput(format!("x0 must be > 0, got {}", self.x0)));
        }
        Ok(())
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn formula(p: &LinearParams) -> f64 {
    let disc = (-p.rate * p.maturity).exp();
    match p.payoff {
        Payoff::Unit => disc,
        Payoff::Put => {
            let sd = p.vol * p.maturity.sqrt();
            let d1 = ((p.x0 / p.strike).ln() + (p.rate + 0.5 * p.vol * p.vol) * p.maturity) / sd;
            let d2 = d1 - sd;
            p.strike * disc * std_normal_cdf(-d2) - p.x0 * std_normal_cdf(-d1)
        }
    }
}

/// Closed-form value, cross-checked against [`lognormal_quadrature`].
///
/// Fails if the two disagree by more than `1e-8 * max(1, |value|)`.
pub fn closed_form_linear(p: &LinearParams) -> Result<f64> {
    p.check()?;
    let value = formula(p);
    let quad = lognormal_quadrature(p)?;
    if (value - quad).abs() > 1e-8 * value.abs().max(1.0) {
        return Err(Error::Stability(format!(
            "closed form {value} and quadrature {quad} disagree"
        )));
    }
    Ok(value)
}

/// `e^{-rT} E[Psi(X_T)]` by adaptive Simpson quadrature over the Gaussian
/// variable, split at the payoff kink.
pub fn lognormal_quadrature(p: &LinearParams) -> Result<f64> {
    p.check()?;
    let disc = (-p.rate * p.maturity).exp();
    let sd = p.vol * p.maturity.sqrt();
    let mu = (p.rate - 0.5 * p.vol * p.vol) * p.maturity;
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    const TAIL: f64 = 12.0;
    let value = match p.payoff {
        Payoff::Unit => adaptive_simpson(&density, -TAIL, TAIL, 1e-13),
        Payoff::Put => {
            // X_T < K  <=>  z < z_star
            let z_star = ((p.strike / p.x0).ln() - mu) / sd;
            let hi = z_star.min(TAIL);
            if hi <= -TAIL {
                0.0
            } else {
                let f = |z: f64| (p.strike - p.x0 * (mu + sd * z).exp()).max(0.0) * density(z);
                adaptive_simpson(&f, -TAIL, hi, 1e-12 * p.strike)
            }
        }
    };
    Ok(disc * value)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> LinearParams {
        LinearParams {
            rate: 0.05,
            vol: 0.2,
            strike: 100.0,
            x0: 100.0,
            maturity: 1.0,
            payoff: Payoff::Put,
        }
    }

    #[test]
    fn formula_agrees_with_quadrature() {
        let p = base();
        let v = closed_form_linear(&p).unwrap();
        let q = lognormal_quadrature(&p).unwrap();
        assert!((v - q).abs() < 1e-8, "{v} vs {q}");
        // put-call parity: C - P = x0 - K e^{-rT}; C computed from the same N
        let sd = 0.2;
        let d1 = (0.05 + 0.02) / sd;
        let call = 100.0 * std_normal_cdf(d1) - 100.0 * (-0.05f64).exp() * std_normal_cdf(d1 - sd);
        assert!((call - v - (100.0 - 100.0 * (-0.05f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn vanishing_vol_limit() {
        let p = LinearParams {
            vol: 1e-6,
            x0: 80.0,
            ..base()
        };
        let v = closed_form_linear(&p).unwrap();
        let limit = (-0.05f64).exp() * (100.0 - 80.0 * 0.05f64.exp());
        assert!((v - limit).abs() < 1e-9);
    }

    #[test]
    fn unit_payoff_is_pure_discount() {
        let p = LinearParams {
            payoff: Payoff::Unit,
            ..base()
        };
        assert!((closed_form_linear(&p).unwrap() - (-0.05f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(closed_form_linear(&LinearParams { vol: 0.0, ..base() }).is_err());
        assert!(closed_form_linear(&LinearParams { maturity: 0.0, ..base() }).is_err());
    }
}
