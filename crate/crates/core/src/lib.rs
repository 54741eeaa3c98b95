//! Numerical lab for penalized constrained BSDEs and the variational
//! inequalities they approximate.
//!
//! Everything numeric is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bsde;
pub mod error;
pub mod linalg;
pub mod pde;
pub mod problem;
pub mod scalar;
pub mod sde;
pub mod surface;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Problem = problem::CoefficientSet<f64>;
pub type Surface = surface::ValueSurface<f64>;
pub type Ensemble = sde::PathEnsemble<f64>;
pub type Chain = sde::ChainDiscretization<f64>;
pub type Grid = sde::TimeGrid<f64>;
pub type BsdeSolution = bsde::PenalizedBsdeSolution<f64>;
