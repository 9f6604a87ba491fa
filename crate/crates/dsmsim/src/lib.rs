//! Simulator and metrics engine for game-theoretic demand-side management.
//!
//! Consumers schedule flexible appliances over a day; the cost of serving
//! each hour's aggregate load is split back to them by a billing mechanism.
//! This crate computes the Nash equilibria those mechanisms induce (via
//! best response dynamics), the social optimum, and efficiency and
//! fairness metrics against reference tariffs and an externality-based
//! fair split.
//!
//! Start with [`model::Scenario`] to describe a day, [`qpsolve`] for the
//! optimization kernel, [`dynamics::run_brd`] for equilibria, [`billing`]
//! for the mechanisms, and [`metrics`] for the indicators. The `examples/`
//! directory walks through each capability end to end.

pub mod billing;
pub mod dynamics;
pub mod error;
pub mod formats;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod qpsolve;
pub mod synth;

pub use error::{Error, Result};
