//! Bounded model checking of assertion violations in shared-memory
//! programs under SC, TSO and PSO.
//!
//! The pipeline is `frontend` (parse, unroll) → `ssa` (guarded SSA and
//! read/write events) → `memmodel` (preserved program order) → `matches`
//! (potential read-from pairs) → `encode` (propositional formula over
//! match, clock and value variables) → `solve` → `witness`. The `oracle`
//! module is an explicit-state store-buffer simulator used to
//! cross-check verdicts.

pub mod frontend;
pub mod arith;
pub mod ssa;
pub mod memmodel;
pub mod matches;
pub mod encode;
pub mod oracle;
pub mod solve;
pub mod witness;
pub mod check;
pub mod corpus;
