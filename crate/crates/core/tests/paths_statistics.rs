mod common;

use common::*;
use proptest::prelude::*;
use pvi_core::problem::CoefficientSet;
use pvi_core::sde::{simulate_paths, TimeGrid};

fn terminal_mean(n_steps: usize, n_paths: usize, seed: u64) -> (f64, f64) {
    let spec = obstacle_put();
    let grid = TimeGrid::new(0.0, 1.0, n_steps).unwrap();
    let ens = simulate_paths(&spec, 0.0, &[100.0], &grid, n_paths, seed).unwrap();
    let xs: Vec<f64> = (0..n_paths).map(|p| ens.state(p, n_steps)[0]).collect();
    let mean = xs.iter().sum::<f64>() / n_paths as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64;
    (mean, (var / n_paths as f64).sqrt())
}

#[test]
fn lognormal_terminal_mean_matches_exact_moment() {
    let exact = 100.0 * 0.05f64.exp();
    let (mean, se) = terminal_mean(50, 100_000, 11);
    assert!((mean - exact).abs() <= 3.0 * se, "mean {mean} exact {exact} se {se}");
}

#[test]
fn euler_bias_halves_with_the_step() {
    // E[X_T] under Euler is x0 (1 + r dt)^n exactly, so the bias is deterministic;
    // the sample means only need to track it.
    let exact = 100.0 * 0.05f64.exp();
    let euler = |n: usize| 100.0 * (1.0 + 0.05 / n as f64).powi(n as i32);
    let (b1, b2) = (exact - euler(4), exact - euler(8));
    assert!((b1 / b2 - 2.0).abs() < 0.05, "ratio {}", b1 / b2);
    for n in [4, 8] {
        let (mean, se) = terminal_mean(n, 100_000, 3);
        assert!((mean - euler(n)).abs() <= 3.0 * se);
    }
}

#[test]
fn brownian_increments_have_unit_variance_per_time() {
    let spec = CoefficientSet::<f64>::builder(2, 1.0)
        .diffusion(|_, _, o| {
            o.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        })
        .build()
        .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let n = 20_000;
    let ens = simulate_paths(&spec, 0.0, &[0.0, 0.0], &grid, n, 5).unwrap();
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    let mut cross = 0.0;
    for p in 0..n {
        for k in 0..10 {
            let dw = ens.increment(p, k);
            for i in 0..2 {
                sum[i] += dw[i];
                sq[i] += dw[i] * dw[i];
            }
            cross += dw[0] * dw[1];
        }
    }
    let m = (n * 10) as f64;
    for i in 0..2 {
        assert!((sum[i] / m).abs() < 4.0 * (0.1 / m).sqrt());
        assert!((sq[i] / m - 0.1).abs() < 4.0 * 0.1 * (2.0 / m).sqrt());
    }
    assert!((cross / m).abs() < 4.0 * 0.1 / m.sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_a_pure_function_of_the_seed(seed in any::<u64>(), n_paths in 1usize..64) {
        let spec = obstacle_put();
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let a = simulate_paths(&spec, 0.0, &[100.0], &grid, n_paths, seed).unwrap();
        let b = simulate_paths(&spec, 0.0, &[100.0], &grid, n_paths + 3, seed).unwrap();
        for p in 0..n_paths {
            for k in 0..=8 {
                prop_assert_eq!(a.state(p, k), b.state(p, k));
            }
        }
    }

    #[test]
    fn lognormal_paths_stay_positive(seed in any::<u64>()) {
        let spec = obstacle_put();
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let ens = simulate_paths(&spec, 0.0, &[100.0], &grid, 32, seed).unwrap();
        for p in 0..32 {
            for k in 0..=50 {
                prop_assert!(ens.state(p, k)[0] > 0.0);
            }
        }
    }
}
