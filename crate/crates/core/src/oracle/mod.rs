//! Independent reference implementations for cross-checking the solvers.
//!
//! Everything in this module is deliberately separate from the production
//! code paths: the scaling reference re-derives its updates from the TU
//! kernel, the assignment and enumeration oracles work combinatorially, and
//! the simulator draws individual agents. They are used by the test and
//! acceptance suites and exposed through the CLI's comparison command.

mod enumerate;
mod hungarian;
mod montecarlo;
mod sinkhorn;

pub use enumerate::enumerate_stable_outcomes;
pub use hungarian::{hungarian_optimal, Assignment};
pub use montecarlo::{simulate_heterogeneous_market, SimulatedFrequencies, SimulationDraw};
pub use sinkhorn::sinkhorn_reference;

use crate::ipfp::SolveError;
use crate::transfer::TransferError;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("oracle handles at most {limit} agents per side, got {size}")]
    SizeExceeded { size: usize, limit: usize },
    #[error("scaling reference did not converge within {0} sweeps")]
    NonConvergence(usize),
    #[error("{operation} requires TU transfers throughout, found {family}")]
    RequiresTu {
        operation: &'static str,
        family: String,
    },
    #[error("invalid oracle input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
}
