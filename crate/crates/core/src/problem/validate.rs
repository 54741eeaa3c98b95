//! Sampling probes for the Lipschitz and growth assumptions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::CoefficientSet;
use crate::scalar::{distance, norm, Real};

/// Relative slack applied to declared constants before a slope counts as a violation.
pub const LIPSCHITZ_SLACK: f64 = 1e-9;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub coefficient: String,
    /// Arguments of the first sample, flattened as `(t, x.., y, z..)` or `(t, x..)`.
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Largest sampled slope per coefficient (`drift_diffusion`, `driver`, `constraint`).
    pub lipschitz_estimates: BTreeMap<String, f64>,
    /// Largest sampled `|f(t, x, 0, 0)| / (1 + |x|^p)` for the driver and constraint.
    pub growth_estimates: BTreeMap<String, f64>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_finite<T: Real>(name: &str, v: T, args: &[f64]) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            coefficient: name.to_string(),
            input: format!("{args:?}"),
        })
    }
}

#[derive(Default)]
struct ChunkOutcome {
    max_slope: [f64; 3],
    max_growth: [f64; 2],
    violations: Vec<Violation>,
}

const NAMES: [&str; 3] = ["drift_diffusion", "driver", "constraint"];

/// Estimate Lipschitz and growth constants by sampling `n_samples` random
/// pairs uniformly from `[-box_radius, box_radius]` in `x`, `y` and `z`
/// (time is drawn from `[0, horizon]`). Deterministic for a given seed and
/// independent of the worker count.
pub fn validate_problem<T: Real>(
    spec: &CoefficientSet<T>,
    n_samples: usize,
    box_radius: f64,
    seed: u64,
) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be at least 1".into()));
    }
    if !(box_radius > 0.0) || !box_radius.is_finite() {
        return Err(Error::InvalidInput("box_radius must be positive".into()));
    }
    let n_chunks = n_samples.div_ceil(CHUNK);
    let outcomes: Vec<Result<ChunkOutcome>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let count = CHUNK.min(n_samples - chunk * CHUNK);
            sample_chunk(spec, count, box_radius, seed, chunk as u64)
        })
        .collect();

    let mut max_slope = [0.0f64; 3];
    let mut max_growth = [0.0f64; 2];
    let mut violations = Vec::new();
    for outcome in outcomes {
        let o = outcome?;
        for i in 0..3 {
            max_slope[i] = max_slope[i].max(o.max_slope[i]);
        }
        for i in 0..2 {
            max_growth[i] = max_growth[i].max(o.max_growth[i]);
        }
        violations.extend(o.violations);
    }
    Ok(ValidationReport {
        lipschitz_estimates: NAMES
            .iter()
            .zip(max_slope)
            .map(|(n, v)| (n.to_string(), v))
            .collect(),
        growth_estimates: [("driver".to_string(), max_growth[0]), ("constraint".to_string(), max_growth[1])]
            .into_iter()
            .collect(),
        violations,
    })
}

fn sample_chunk<T: Real>(
    spec: &CoefficientSet<T>,
    count: usize,
    radius: f64,
    seed: u64,
    stream: u64,
) -> Result<ChunkOutcome> {
    let d = spec.dim;
    let horizon = spec.horizon.as_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<T> {
        (0..n).map(|_| T::lit(rng.random_range(-radius..=radius))).collect()
    };

    let declared = [spec.lip_bx, spec.lip_g, spec.lip_phi].map(|c| c.as_f64());
    let mut out = ChunkOutcome::default();
    let (mut b1, mut b2) = (vec![T::zero(); d], vec![T::zero(); d]);
    let (mut s1, mut s2) = (vec![T::zero(); d * d], vec![T::zero(); d * d]);
    let zeros = vec![T::zero(); d];

    for _ in 0..count {
        let t = T::lit(rng.random_range(0.0..=horizon));
        let x = draw(&mut rng, d);
        let x2 = draw(&mut rng, d);
        let yz = draw(&mut rng, 2 + 2 * d);
        let (y, y2) = (yz[0], yz[1]);
        let (z, z2) = (&yz[2..2 + d], &yz[2 + d..]);

        let flat = |t: T, x: &[T], tail: &[T]| -> Vec<f64> {
            std::iter::once(t)
                .chain(x.iter().copied())
                .chain(tail.iter().copied())
                .map(Real::as_f64)
                .collect()
        };

        // b and sigma jointly in x.
        spec.drift(t, &x, &mut b1);
        spec.drift(t, &x2, &mut b2);
        spec.diffusion(t, &x, &mut s1);
        spec.diffusion(t, &x2, &mut s2);
        for (v, args) in [(&b1, &x), (&b2, &x2)] {
            for &c in v.iter() {
                check_finite("drift", c, &flat(t, args, &[]))?;
            }
        }
        for (v, args) in [(&s1, &x), (&s2, &x2)] {
            for &c in v.iter() {
                check_finite("diffusion", c, &flat(t, args, &[]))?;
            }
        }
        let dx = distance(&x, &x2).as_f64();
        if dx > 0.0 {
            let slope = (distance(&b1, &b2) + distance(&s1, &s2)).as_f64() / dx;
            record(&mut out, 0, slope, declared[0], flat(t, &x, &[]), flat(t, &x2, &[]));
        }

        // g and Phi in (y, z) at fixed (t, x).
        let dyz = ((y - y2).abs() + distance(z, z2)).as_f64();
        let tail1: Vec<T> = std::iter::once(y).chain(z.iter().copied()).collect();
        let tail2: Vec<T> = std::iter::once(y2).chain(z2.iter().copied()).collect();
        for (idx, name) in [(1usize, "driver"), (2, "constraint")] {
            let f = |y: T, z: &[T]| {
                if idx == 1 {
                    spec.driver(t, &x, y, z)
                } else {
                    spec.constraint(t, &x, y, z)
                }
            };
            let v1 = check_finite(name, f(y, z), &flat(t, &x, &tail1))?;
            let v2 = check_finite(name, f(y2, z2), &flat(t, &x, &tail2))?;
            if dyz > 0.0 {
                let slope = (v1 - v2).abs().as_f64() / dyz;
                record(&mut out, idx, slope, declared[idx], flat(t, &x, &tail1), flat(t, &x, &tail2));
            }
            let at_origin = f(T::zero(), &zeros).abs().as_f64();
            let scale = 1.0 + norm(&x).as_f64().powi(spec.growth_p as i32);
            out.max_growth[idx - 1] = out.max_growth[idx - 1].max(at_origin / scale);
        }

        check_finite("terminal", spec.terminal(&x), &flat(t, &x, &[]))?;
    }
    Ok(out)
}

fn record(out: &mut ChunkOutcome, idx: usize, slope: f64, declared: f64, a: Vec<f64>, b: Vec<f64>) {
    out.max_slope[idx] = out.max_slope[idx].max(slope);
    if slope > declared * (1.0 + LIPSCHITZ_SLACK) {
        out.violations.push(Violation {
            coefficient: NAMES[idx].to_string(),
            first: a,
            second: b,
            slope,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_problem, CATALOG};

    fn kv(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn linear_driver_at_declared_constant_is_clean() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .driver(|_, _, y, _| -0.05 * y)
            .lipschitz(0.0, 0.05, 0.0)
            .build()
            .unwrap();
        let rep = validate_problem(&spec, 5000, 10.0, 3).unwrap();
        assert!(rep.is_clean(), "{:?}", rep.violations.first());
        assert!((rep.lipschitz_estimates["driver"] - 0.05).abs() < 1e-3);
    }

    #[test]
    fn obstacle_constraint_with_unit_constant_is_clean() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .obstacle(|_, x| (100.0 - x[0]).max(0.0))
            .lipschitz(0.0, 0.0, 1.0)
            .build()
            .unwrap();
        let rep = validate_problem(&spec, 5000, 10.0, 4).unwrap();
        assert!(rep.is_clean());
    }

    #[test]
    fn quadratic_driver_is_flagged() {
        // Oracle: the sampled slope is exactly |y1 + y2|; count how often it exceeds 1.
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .driver(|_, _, y, _| y * y)
            .lipschitz(0.0, 1.0, 0.0)
            .build()
            .unwrap();
        let rep = validate_problem(&spec, 2000, 10.0, 5).unwrap();
        let driver_violations: Vec<_> = rep
            .violations
            .iter()
            .filter(|v| v.coefficient == "driver")
            .collect();
        assert!(driver_violations.len() > 1000);
        for v in driver_violations {
            let (y1, z1, y2, z2) = (v.first[2], v.first[3], v.second[2], v.second[3]);
            let direct = (y1 * y1 - y2 * y2).abs() / ((y1 - y2).abs() + (z1 - z2).abs());
            assert!((direct - v.slope).abs() <= 1e-9 * direct.max(1.0));
            assert!(direct > 1.0);
        }
    }

    #[test]
    fn catalog_passes_its_own_constants() {
        let params = [
            kv(&[("rate", 0.05), ("strike", 100.0), ("vol", 0.2)]),
            kv(&[("rate", 0.05), ("strike", 100.0), ("vol", 0.2)]),
            kv(&[("slope", 0.5)]),
        ];
        for (name, p) in CATALOG.iter().zip(params.iter()) {
            let spec: CoefficientSet<f64> = builtin_problem(name, p).unwrap();
            let rep = validate_problem(&spec, 4000, 50.0, 11).unwrap();
            assert!(rep.is_clean(), "{name}: {:?}", rep.violations.first());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec: CoefficientSet<f64> =
            builtin_problem("z_constraint", &kv(&[("slope", 2.0)])).unwrap();
        let a = validate_problem(&spec, 3000, 5.0, 9).unwrap();
        let b = validate_problem(&spec, 3000, 5.0, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_coefficient_names_itself() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0)
            .driver(|_, _, y, _| y.ln())
            .build()
            .unwrap();
        match validate_problem(&spec, 100, 1.0, 0) {
            Err(Error::Evaluation { coefficient, .. }) => assert_eq!(coefficient, "driver"),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let spec = CoefficientSet::<f64>::builder(1, 1.0).build().unwrap();
        assert!(validate_problem(&spec, 0, 1.0, 0).is_err());
        assert!(validate_problem(&spec, 10, 0.0, 0).is_err());
    }
}
