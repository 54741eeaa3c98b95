//! Forward dynamics: Euler-Maruyama ensembles and the 1D Markov-chain stand-in.

mod chain;
mod grid;
mod paths;

pub use chain::{build_chain, build_chain_with, ChainBoundary, ChainDiscretization, ChainStencil};
pub use grid::{SpaceGrid, TimeGrid};
pub use paths::{simulate_paths, PathEnsemble, ENSEMBLE_MAGIC};
