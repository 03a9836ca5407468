//! Core of a distributed penalty-driven constraint solver.
//!
//! Each agent owns a single integer variable and a set of directed binary
//! comparison constraints against its neighbours. Agents improve a random
//! initial assignment in synchronized cycles, escaping deadlocks with
//! temporary and incremental penalties, and detect global consistency with a
//! breakout-style termination counter propagated over the constraint graph.
//!
//! This crate is `no_std` (with `alloc`) and free of IO: the [`engine`] is
//! driven entirely through [`protocol`] messages, either by the in-process
//! deterministic [`sim`] harness or by the TCP transport in the companion
//! `dispel-node` crate. [`oracle`] is a brute-force reference solver used to
//! verify solutions independently of the search path.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod engine;
pub mod fixtures;
pub mod oracle;
pub mod problem;
pub mod protocol;
pub mod sim;

pub use engine::{AgentStatus, Engine, PenaltyKind, StepDecision};
pub use problem::{AgentConfig, ComparisonOp, ConstraintExpr, Domain, ProblemSpec};
pub use protocol::{Message, Payload};
pub use sim::{compute_diameter, run_simulation, run_with_faults, SimConfig, SimOutcome};
