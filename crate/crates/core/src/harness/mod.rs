//! Load sweeps over the model and simulator, CSV output, the Monte-Carlo
//! check of the repeat-collision term, and the command-line front end.

mod cli;
mod csv_io;
mod oracle;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::airtime::TimingTable;
use crate::error::{Error, Result};
use crate::model::{evaluate_model, lambda_star};
use crate::scenario::ScenarioConfig;
use crate::simulator::{run_replications, Replicated, SimConfig};

pub use cli::cli_main;
pub use csv_io::{read_csv, read_csv_from, write_csv, write_csv_to, CSV_HEADER};
pub use oracle::{px_monte_carlo_oracle, OracleEstimate, MIN_ORACLE_SAMPLES, PX_CHECK_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engines {
    Model,
    Sim,
    Both,
}

impl Engines {
    pub fn runs_sim(self) -> bool {
        !matches!(self, Engines::Model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
    pub engines: Engines,
    pub sim: SimConfig,
    /// Measured span is stretched until about this many frames are expected.
    pub target_attempts: f64,
    /// Upper bound on the simulated span of one run, seconds.
    pub max_duration: f64,
    /// Keep every finished transmission for auditing.
    #[serde(default)]
    pub record_transmissions: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lambda_min: 1e-3,
            lambda_max: 10.0,
            points: 25,
            engines: Engines::Both,
            sim: SimConfig::default(),
            target_attempts: 1e4,
            max_duration: 1e7,
            record_transmissions: false,
            output: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0)
            || !(self.lambda_max >= self.lambda_min)
            || !self.lambda_max.is_finite()
        {
            return Err(Error::InvalidSweep(format!(
                "need 0 < lambda_min <= lambda_max (got {} .. {})",
                self.lambda_min, self.lambda_max
            )));
        }
        if self.points == 0 {
            return Err(Error::InvalidSweep("points must be positive".into()));
        }
        if self.points == 1 && self.lambda_min != self.lambda_max {
            return Err(Error::InvalidSweep(
                "a single point needs lambda_min == lambda_max".into(),
            ));
        }
        if !(self.target_attempts >= 0.0) || !(self.max_duration > self.sim.warmup) {
            return Err(Error::InvalidSweep(
                "need target_attempts >= 0 and max_duration > warmup".into(),
            ));
        }
        self.sim.validate()
    }

    /// Simulation settings for load `lambda`: the configured duration,
    /// lengthened so the measured span holds `target_attempts / λ` seconds,
    /// but never past `max_duration`.
    pub fn sim_for(&self, lambda: f64) -> SimConfig {
        let wanted = self.sim.warmup + self.target_attempts / lambda;
        SimConfig {
            duration: self
                .sim
                .duration
                .max(wanted)
                .min(self.max_duration.max(self.sim.duration)),
            ..self.sim.clone()
        }
    }
}

/// `points` loads spaced evenly in log scale from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (a, b) = (min.ln(), max.ln());
            let step = (b - a) / (points - 1) as f64;
            (0..points)
                .map(|k| match k {
                    0 => min,
                    k if k == points - 1 => max,
                    k => (a + step * k as f64).exp(),
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimColumns {
    pub per: f64,
    pub per_ci: f64,
    pub per1: f64,
    pub per1_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub model_per: f64,
    pub model_per1: f64,
    /// `λ ≤ λ*`.
    pub valid: bool,
    pub sim: Option<SimColumns>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub lambda_star: f64,
    pub rows: Vec<SweepRow>,
    /// Replication detail per row, `None` for model-only sweeps.
    pub replicated: Vec<Option<Replicated>>,
}

/// Evaluates every grid point, in parallel, returning rows in increasing λ.
/// Simulation streams depend only on the seed and the point index, so the
/// result does not depend on scheduling.
pub fn run_sweep(
    scenario: &ScenarioConfig,
    timing: &TimingTable,
    spec: &SweepSpec,
) -> Result<SweepOutput> {
    scenario.validate()?;
    spec.validate()?;
    let grid = log_grid(spec.lambda_min, spec.lambda_max, spec.points);
    let points: Vec<(SweepRow, Option<Replicated>)> = grid
        .par_iter()
        .enumerate()
        .map(|(point, &lambda)| sweep_point(scenario, timing, spec, point, lambda))
        .collect::<Result<_>>()?;
    let (rows, replicated) = points.into_iter().unzip();
    let out = SweepOutput {
        lambda_star: lambda_star(scenario, timing),
        rows,
        replicated,
    };
    if let Some(path) = &spec.output {
        write_csv(&out.rows, path)?;
    }
    Ok(out)
}

fn sweep_point(
    scenario: &ScenarioConfig,
    timing: &TimingTable,
    spec: &SweepSpec,
    point: usize,
    lambda: f64,
) -> Result<(SweepRow, Option<Replicated>)> {
    let model = evaluate_model(scenario, timing, lambda)?;
    let replicated = if spec.engines.runs_sim() {
        let sim = spec.sim_for(lambda);
        Some(run_replications(
            scenario,
            timing,
            lambda,
            &sim,
            point,
            spec.record_transmissions,
        )?)
    } else {
        None
    };
    let sim = replicated
        .as_ref()
        .and_then(|r| r.summary)
        .map(|s| SimColumns {
            per: s.per.value,
            per_ci: s.per.ci_half_width,
            per1: s.per1.value,
            per1_ci: s.per1.ci_half_width,
        });
    let row = SweepRow {
        lambda,
        model_per: model.per,
        model_per1: model.per1,
        valid: model.is_valid(),
        sim,
    };
    Ok((row, replicated))
}
