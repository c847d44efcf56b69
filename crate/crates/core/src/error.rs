use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: probabilities sum to {sum}, expected 1")]
    DistributionNotNormalized { field: &'static str, sum: f64 },

    #[error("{field}: at least one data rate is required")]
    EmptyRates { field: &'static str },

    #[error("{field}: retry window must be positive, got {value}")]
    NonPositiveWindow { field: &'static str, value: f64 },

    #[error("{field}[{index}]: probability {value} is outside [0, 1]")]
    ProbabilityOutOfRange {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{field}: {reason}")]
    InvalidField { field: &'static str, reason: String },

    #[error("spreading factor {0} is outside 7..=12")]
    SpreadingFactorOutOfRange(u8),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("closed form evaluated to {value} outside [0, 1] (r = {r}, t = {t}, w = {w})")]
    NumericInstability { value: f64, r: f64, t: f64, w: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("need at least {required} replications with attempts, got {got}")]
    InsufficientReplications { required: usize, got: usize },

    #[error("illegal mote transition: {event} in phase {phase}")]
    IllegalTransition { phase: String, event: String },

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Write(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
