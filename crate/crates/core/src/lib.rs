//! Simulation of strings of four-transistor modules that can connect their
//! storage capacitors in series, in parallel or bypass, with direction-aware
//! conduction paths and a lumped inductive parallelization loop.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod circuit;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod modulation;
pub mod oracle;
pub mod parallel;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
