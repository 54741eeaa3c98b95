mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use pvi_core::analysis::dominance_check;
use pvi_core::linalg::Tridiagonal;
use pvi_core::pde::{
    closed_form_linear, solve_penalized_fd, solve_projected_obstacle_fd, FdScheme, LinearParams, Payoff,
};
use pvi_core::problem::builtin_problem;
use pvi_core::sde::{build_chain, TimeGrid};
use pvi_core::surface::ValueSurface;

fn put_with(strike: f64, vol: f64) -> pvi_core::Problem {
    let params: BTreeMap<String, f64> = [("rate", 0.05), ("vol", vol), ("strike", strike)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    builtin_problem("obstacle_put", &params).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn thomas_solves_dominant_systems(
        rows in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0, -5.0f64..5.0), 2..40)
    ) {
        let n = rows.len();
        let mut m = Tridiagonal::zeros(n);
        let mut rhs = vec![0.0; n];
        for (j, &(l, u, d, r)) in rows.iter().enumerate() {
            m.lower[j] = if j > 0 { l } else { 0.0 };
            m.upper[j] = if j + 1 < n { u } else { 0.0 };
            m.diag[j] = m.lower[j].abs() + m.upper[j].abs() + 1.0 + d;
            rhs[j] = r;
        }
        let x = m.solve(&rhs).unwrap();
        let mut back = vec![0.0; n];
        m.apply(&x, &mut back);
        for (a, b) in back.iter().zip(&rhs) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn penalized_fd_is_monotone_in_alpha_and_below_projection(
        strike in 60.0f64..140.0,
        vol in 0.1f64..0.5,
        alpha in 1.0f64..500.0,
    ) {
        let spec = put_with(strike, vol);
        let scheme = FdScheme::implicit(strike / 5.0, strike * 5.0, 80);
        let grid = TimeGrid::new(0.0, 1.0, 40).unwrap();
        let lo = solve_penalized_fd(&spec, &scheme, &grid, alpha).unwrap();
        let hi = solve_penalized_fd(&spec, &scheme, &grid, 2.0 * alpha).unwrap();
        prop_assert!(dominance_check(&lo, &hi).unwrap().is_dominated);
        let projected = solve_projected_obstacle_fd(&spec, &scheme, &grid).unwrap();
        prop_assert!(dominance_check(&hi, &projected).unwrap().is_dominated);
    }

    #[test]
    fn chain_steps_are_probability_measures_matching_moments(
        strike in 60.0f64..140.0,
        vol in 0.1f64..0.4,
        n_steps in 10usize..2000,
    ) {
        let spec = put_with(strike, vol);
        let grid = TimeGrid::new(0.0, 1.0, n_steps).unwrap();
        let chain = build_chain(&spec, &grid, strike / 5.0, strike * 3.0, 100).unwrap();
        for j in 0..chain.nodes().len() {
            if chain.is_absorbing(0, j) {
                continue;
            }
            let s = chain.stencil(0, j);
            let total: f64 = s.probs.iter().sum();
            prop_assert!(s.probs.iter().all(|&p| p >= 0.0));
            prop_assert!((total - 1.0).abs() < 1e-12);
            let x = chain.nodes()[j];
            let (mean, var) = chain.moments(0, j);
            prop_assert!((mean - 0.05 * x * grid.dt).abs() < 1e-12 * x.max(1.0));
            prop_assert!((var - (vol * x).powi(2) * grid.dt).abs() < 1e-12 * x.max(1.0).powi(2));
        }
    }

    #[test]
    fn closed_form_satisfies_put_call_parity_bounds(
        rate in 0.0f64..0.1,
        vol in 0.05f64..0.6,
        spot in 50.0f64..150.0,
    ) {
        let p = LinearParams { rate, vol, strike: 100.0, x0: spot, maturity: 1.0, payoff: Payoff::Put };
        let put = closed_form_linear(&p).unwrap();
        let intrinsic = (100.0 * (-rate).exp() - spot).max(0.0);
        prop_assert!(put >= intrinsic - 1e-10);
        prop_assert!(put <= 100.0 * (-rate).exp() + 1e-10);
    }

    #[test]
    fn surface_csv_round_trips(values in prop::collection::vec(-1e6f64..1e6, 12)) {
        let s = ValueSurface::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0, 4.0], values).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ValueSurface::<f64>::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values, s.values);
    }
}

#[test]
fn single_precision_tracks_double() {
    let params = lognormal_params();
    let spec32 = builtin_problem::<f32>("obstacle_put", &params).unwrap();
    let spec64 = obstacle_put();
    let scheme = put_scheme(100);
    let u32_ = solve_penalized_fd(&spec32, &scheme, &TimeGrid::new(0.0f32, 1.0, 100).unwrap(), 64.0).unwrap();
    let u64_ = solve_penalized_fd(&spec64, &scheme, &TimeGrid::new(0.0, 1.0, 100).unwrap(), 64.0).unwrap();
    let (a, b) = (u32_.initial_value(100.0) as f64, u64_.initial_value(100.0));
    assert!((a - b).abs() / b < 1e-3, "{a} vs {b}");
}
