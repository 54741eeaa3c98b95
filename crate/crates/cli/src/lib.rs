//! Configuration-driven experiment runner for the `pvi_core` solvers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod runner;
pub mod table;

pub use artifacts::{ArtifactEntry, Manifest};
pub use config::ExperimentConfig;
pub use error::CliError;
pub use runner::{run_config_file, run_experiment};
pub use table::{emit_table, TableKind};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "PVI_THREADS";

/// Size the global pool from `PVI_THREADS`; unset or empty means machine parallelism.
pub fn init_thread_pool() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    if raw.trim().is_empty() {
        return Ok(());
    }
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Config {
        key: Some(THREADS_ENV.into()),
        message: format!("expected a positive integer, got `{raw}`"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config {
            key: Some(THREADS_ENV.into()),
            message: e.to_string(),
        })
}
