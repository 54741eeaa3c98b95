//! Diagnostics on computed solutions: penalization sweeps, viscosity
//! residuals, dominance and Skorohod flatness.

mod checks;
mod residual;
mod sweep;

pub use checks::{
    constant_surface, dominance_check, skorohod_flatness, DominanceResult, SkorohodResult,
    DOMINANCE_TOL,
};
pub use residual::{
    supersolution_family_residual, viscosity_residual, FamilyReading, FamilyReport, FamilyRow,
    ResidualLevel, ResidualOptions, ResidualReport,
};
pub use sweep::{
    convergence_report, penalization_sweep, richardson_limit, ConvergenceReport, MonotonicityViolation, SurfaceRef,
    SweepMember, SweepMethod, MONOTONICITY_TOL,
};
