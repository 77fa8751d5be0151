//! Normal martingales solving structure equations on a Wiener–Poisson space,
//! controlled dynamics driven by them, and the mixed differential/difference
//! HJB equation of the associated control problem.
//!
//! The crate is organised bottom-up:
//!
//! * [`levy`]: Lévy measures, tail masses and the nested jump regions that
//!   route Poisson jumps to coordinates.
//! * [`martingale`]: discrete-time simulation of the martingale `X` for a
//!   predictable jump-size rule `u`, plus quadratic-variation diagnostics.
//! * [`control`]: controlled dynamics `Y`, Monte Carlo cost and value
//!   estimates, and the dynamic-programming probe.
//! * [`operators`]: the generators `A` and `L`, the δ-regularised operator,
//!   the Hamiltonian and the Itô-formula residual.
//! * [`hjb`]: explicit monotone solver for the HJB equation on a lattice.
//! * [`harness`]: config parsing, recipes, CSV artifacts and reports.
//!
//! Monte Carlo loops and per-node solver updates run on rayon when the
//! `parallel` feature is enabled (the default). Every result is bit-identical
//! between the parallel and the sequential path.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod control;
pub mod error;
pub mod exec;
pub mod harness;
pub mod hjb;
pub mod levy;
pub mod martingale;
pub mod operators;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
