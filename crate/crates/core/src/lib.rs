//! Simulation and assessment toolkit for timing covert channels on
//! separation-kernel hypervisors with a fixed cyclic partition schedule.
//!
//! The crate is split along the assessment workflow:
//!
//! * [`simkernel`] simulates the partition scheduler, its context switches and
//!   the virtual time-base counter read by the receiving partition.
//! * [`attackchan`] turns a bit message into a sender plan and decodes the
//!   receiver's timing trace back into bits.
//! * [`timestats`] holds the statistics: summaries, Welch's t-test, the
//!   permutation oracle and the with/without-attack verdict.
//! * [`harness`] expands parameter grids, runs and persists campaigns,
//!   ingests external traces, calibrates the cost model and renders reports.

pub mod attackchan;
pub mod digest;
pub mod harness;
pub mod par;
pub mod simkernel;
pub mod timestats;

/// Version string recorded in persisted campaign results.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
