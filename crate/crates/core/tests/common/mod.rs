#![allow(dead_code)]

use std::collections::BTreeMap;

use pvi_core::pde::FdScheme;
use pvi_core::problem::builtin_problem;
use pvi_core::Problem;

pub fn lognormal_params() -> BTreeMap<String, f64> {
    [("rate", 0.05), ("vol", 0.2), ("strike", 100.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

pub fn obstacle_put() -> Problem {
    builtin_problem("obstacle_put", &lognormal_params()).unwrap()
}

pub fn unconstrained_linear() -> Problem {
    builtin_problem("unconstrained_linear", &lognormal_params()).unwrap()
}

pub fn put_scheme(n_space: usize) -> FdScheme {
    FdScheme::implicit(20.0, 500.0, n_space)
}

/// Cox-Ross-Rubinstein valuation of the early-exercise put.
pub fn crr_american_put(spot: f64, strike: f64, rate: f64, vol: f64, maturity: f64, steps: usize) -> f64 {
    let dt = maturity / steps as f64;
    let up = (vol * dt.sqrt()).exp();
    let down = 1.0 / up;
    let disc = (-rate * dt).exp();
    let p = ((rate * dt).exp() - down) / (up - down);
    let mut values: Vec<f64> = (0..=steps)
        .map(|i| (strike - spot * up.powi(i as i32) * down.powi((steps - i) as i32)).max(0.0))
        .collect();
    for n in (0..steps).rev() {
        for i in 0..=n {
            let cont = disc * (p * values[i + 1] + (1.0 - p) * values[i]);
            let s = spot * up.powi(i as i32) * down.powi((n - i) as i32);
            values[i] = cont.max(strike - s);
        }
    }
    values[0]
}
