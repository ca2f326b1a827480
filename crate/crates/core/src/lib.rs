//! Deterministic desk-scale mission simulator for probe retrieval,
//! deployment and landing on a moving rover, with two autonomy stacks and
//! the trial-metrics pipeline used to compare them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autonomy;
pub mod control;
pub mod estimation;
pub mod io;
pub mod metrics;
pub mod scenario;
pub mod sensing;
pub mod vehicle;
pub mod world;

pub use autonomy::{run_batch, run_trial, Outcome, Team, TrialRecord};
pub use scenario::Scenario;
