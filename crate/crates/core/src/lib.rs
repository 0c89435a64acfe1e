//! Equilibrium solvers for matching markets with imperfectly transferable
//! utility.
//!
//! The central object is a pair of margin equations in type-level
//! potentials `(u, v)`: the matching function of each pair, derived from a
//! transfer technology `psi` and a temperature `T`, must sum with the
//! unmatched masses to the population masses on both sides. This crate
//! provides:
//!
//! * [`transfer`] — the TU / NTU / LTU / ETU transfer families (plus custom
//!   isotone functions) and their induced matching functions;
//! * [`system`] — aggregate markets, residual evaluation, the balanced
//!   variant, and gauge normalization;
//! * [`ipfp`] — the alternating exact-margin solver, its convergence
//!   report, and a diagonal-dominance diagnostic of the margin Jacobian;
//! * [`equilibrium`] — sharp assignment between individuals via
//!   temperature cooling, integral rounding, and outcome verification;
//! * [`oracle`] — independent references (Hungarian assignment, classical
//!   kernel scaling, exhaustive stability enumeration, Monte-Carlo
//!   simulation) used for cross-checks;
//! * [`io`] — the market file schema and bit-faithful solution documents.

// Indexed loops mirror the row/column algebra throughout; iterator
// rewrites obscure the symmetry.
#![allow(clippy::needless_range_loop)]

pub mod equilibrium;
pub mod io;
pub mod ipfp;
pub mod numeric;
pub mod oracle;
mod rootfind;
pub mod system;
pub mod transfer;

pub use equilibrium::{
    anneal, extract_integral, solve_at_temperature, verify_outcome, CoolingSchedule,
    EquilibriumOutcome, IndividualMarket,
};
pub use ipfp::{jacobian_diagnostic, Solution, SolveReport, SolverConfig};
pub use system::{Market, Matching, Potentials, TransferTable};
pub use transfer::{CustomTransfer, TransferSpec};
