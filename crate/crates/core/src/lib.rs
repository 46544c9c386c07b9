//! Optimal probing schedules for detecting new items in a network.
//!
//! A generating process emits sets of nodes that an item has reached; a
//! c-schedule picks `c` nodes to probe per step, and an item stays
//! uncaught (and keeps a decaying novelty) until one of its nodes is
//! probed. The crate computes the long-run expected load of a schedule,
//! finds the schedule minimizing it by fixed-point iteration (from the
//! explicit process or from an observed sample), and simulates the whole
//! system to validate schedules empirically.

pub mod adapt;
pub mod cost;
pub mod error;
pub mod model;
pub mod numeric;
pub mod parallel;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
