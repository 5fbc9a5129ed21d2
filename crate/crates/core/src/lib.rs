// Validation uses `!(x > 0.0)` so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod gait;
pub mod plant;
pub mod rnn;

pub use error::{Error, Result};

/// Control loop rate in Hz.
pub const CONTROL_RATE_HZ: f64 = 200.0;
/// Control tick period in seconds.
pub const CONTROL_DT: f64 = 1.0 / CONTROL_RATE_HZ;
/// Plant integration substeps per control tick (1 kHz internal rate).
pub const SUBSTEPS: usize = 5;
