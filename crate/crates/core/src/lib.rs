//! Capacity analysis for acknowledged LoRaWAN class A uplinks.
//!
//! [`model`] gives the packet error rate as a closed function of offered
//! load; [`simulator`] runs the same protocol event by event so the two can
//! be compared; [`harness`] sweeps load with both and writes CSV.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod airtime;
pub mod error;
pub mod harness;
pub mod model;
pub mod scenario;
pub mod simulator;

pub use airtime::{build_timing_table, time_on_air, AirtimeQuery, TimingTable};
pub use error::{Error, Result};
pub use model::{evaluate_model, lambda_star, ModelResult};
pub use scenario::{paper_preset, validate_scenario, ScenarioConfig};
