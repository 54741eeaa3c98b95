//! Euler-Maruyama path ensembles.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::CoefficientSet;
use crate::scalar::Real;
use crate::sde::TimeGrid;

/// Magic bytes of the binary ensemble dump.
pub const ENSEMBLE_MAGIC: &[u8; 4] = b"PVI1";

/// Simulated forward paths with the Brownian increments that produced them.
///
/// `states` is laid out `[path][step][dim]` with `n_steps + 1` steps;
/// `increments` is `[path][step][dim]` with `n_steps` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble<T> {
    pub grid: TimeGrid<T>,
    pub dim: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub states: Vec<T>,
    pub increments: Vec<T>,
}

impl<T: Real> PathEnsemble<T> {
    #[inline]
    pub fn state(&self, path: usize, step: usize) -> &[T] {
        let d = self.dim;
        let base = (path * (self.grid.n_steps + 1) + step) * d;
        &self.states[base..base + d]
    }

    #[inline]
    pub fn increment(&self, path: usize, step: usize) -> &[T] {
        let d = self.dim;
        let base = (path * self.grid.n_steps + step) * d;
        &self.increments[base..base + d]
    }

    /// Write the binary dump: magic, then `dim, n_paths, n_steps, seed` as
    /// little-endian `u64`, then states and increments as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(ENSEMBLE_MAGIC)?;
        for v in [self.dim as u64, self.n_paths as u64, self.grid.n_steps as u64, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.states.iter().chain(self.increments.iter()) {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a dump written by [`write_binary`](Self::write_binary); the time
    /// span is not part of the format and must be supplied.
    pub fn read_binary<R: Read>(mut r: R, t0: T, t_end: T) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != ENSEMBLE_MAGIC {
            return Err(Error::Io("bad ensemble magic".into()));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [dim, n_paths, n_steps, seed] = header.map(|v| v as usize);
        let grid = TimeGrid::new(t0, t_end, n_steps)?;
        let mut read_block = |n: usize| -> Result<Vec<T>> {
            (0..n)
                .map(|_| {
                    r.read_exact(&mut word)?;
                    Ok(T::lit(f64::from_le_bytes(word)))
                })
                .collect()
        };
        let states = read_block(n_paths * (n_steps + 1) * dim)?;
        let increments = read_block(n_paths * n_steps * dim)?;
        Ok(Self {
            grid,
            dim,
            n_paths,
            seed: seed as u64,
            states,
            increments,
        })
    }
}

/// Simulate `n_paths` Euler-Maruyama paths of `dX = b dt + sigma dW` from `x0`.
///
/// Path `p` draws its increments from a ChaCha stream keyed by `(seed, p)`,
/// so the output is bitwise identical for any worker count.
pub fn simulate_paths<T: Real>(
    spec: &CoefficientSet<T>,
    t0: T,
    x0: &[T],
    grid: &TimeGrid<T>,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble<T>> {
    let d = spec.dim;
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be at least 1".into()));
    }
    if x0.len() != d {
        return Err(Error::Shape(format!("x0 has length {}, expected {d}", x0.len())));
    }
    if grid.t0 != t0 || grid.t_end != spec.horizon {
        return Err(Error::InvalidInput(format!(
            "time grid [{}, {}] must start at t0 = {t0} and end at the horizon {}",
            grid.t0, grid.t_end, spec.horizon
        )));
    }
    let n = grid.n_steps;
    let mut states = vec![T::zero(); n_paths * (n + 1) * d];
    let mut increments = vec![T::zero(); n_paths * n * d];
    let sqrt_dt = grid.dt.sqrt();

    let failure = states
        .par_chunks_mut((n + 1) * d)
        .zip(increments.par_chunks_mut(n * d))
        .enumerate()
        .filter_map(|(p, (xs, dws))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut b = vec![T::zero(); d];
            let mut s = vec![T::zero(); d * d];
            xs[..d].copy_from_slice(x0);
            for k in 0..n {
                for w in dws[k * d..(k + 1) * d].iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *w = T::lit(z) * sqrt_dt;
                }
                let t = grid.time(k);
                let (head, tail) = xs.split_at_mut((k + 1) * d);
                let x = &head[k * d..];
                spec.drift(t, x, &mut b);
                spec.diffusion(t, x, &mut s);
                let dw = &dws[k * d..(k + 1) * d];
                for i in 0..d {
                    let mut v = x[i] + b[i] * grid.dt;
                    for (j, &w) in dw.iter().enumerate() {
                        v += s[i * d + j] * w;
                    }
                    if !v.is_finite() {
                        return Some((p, k + 1));
                    }
                    tail[i] = v;
                }
            }
            None
        })
        .min();
    if let Some((path, step)) = failure {
        return Err(Error::Simulation { path, step });
    }
    Ok(PathEnsemble {
        grid: *grid,
        dim: d,
        n_paths,
        seed,
        states,
        increments,
    })
}
