//! Propositional back end for the weak-memory model checker.
//!
//! The crate provides the literal and clause-database types the encoder
//! lowers into, a conflict-driven clause-learning solver that exposes the
//! search counters (decisions, propagations, conflicts) needed for the
//! exploration-efficacy metric, and DIMACS import/export for handing the
//! same formula to an external solver.

mod cnf;
pub mod dimacs;
mod heap;
mod solver;

pub use cnf::{Cnf, Lit, Var};
pub use dimacs::{import_external_model, parse_dimacs, parse_solver_output, write_dimacs, ExternalOutput};
pub use solver::{exploration_efficacy, Efficacy, SolveResult, SolveStats, Solver, Status};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SatError {
    #[error("malformed CNF: {0}")]
    MalformedCnf(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("external model rejected: {0}")]
    ModelRejected(String),
    #[error("cannot parse DIMACS input at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
