//! Seeded discrete-event simulation of the class A protocol.
//!
//! Each mote draws Poisson frame arrivals at `λ/N`, picks a main channel
//! uniformly per attempt, and waits for ACK1 (`T1` after its frame, same
//! channel) and ACK2 (`T2`, downlink channel, lowest rate). With no ACK it
//! backs off uniformly over `[1, 1 + W]` s after the ACK2 window and
//! retries, at most `RL` times. The gateway drops an ACK1 that would start
//! while it is receiving on that channel and rate.
//!
//! A run is a single sequential event loop. Replications are independent
//! and run in parallel, each on its own ChaCha stream.

mod engine;
mod medium;
mod mote;
mod queue;
mod stats;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airtime::TimingTable;
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

pub use engine::{assign_rates, SimOutcome, Simulation};
pub use medium::{collision_rule, Medium, Transmission, TxKind};
pub use mote::{
    mote_step, ActiveFrame, Frame, MoteAction, MoteEvent, MotePhase, MoteRules, MoteState,
};
pub use queue::EventQueue;
pub use stats::{estimate_per, mean_ci, Estimate, PerSummary, SimStats, Z_95};
pub use trace::{audit_transmissions, successful_data_overlaps, AuditViolation, TRACE_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated time, seconds.
    pub duration: f64,
    /// Frames and attempts starting before this time are not counted.
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
    #[serde(default)]
    pub rate_decrement: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 100_000.0,
            warmup: 1_000.0,
            seed: 1,
            replications: 5,
            rate_decrement: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup >= 0.0) || !self.duration.is_finite() || !(self.duration > self.warmup) {
            return Err(Error::InvalidSimConfig(format!(
                "need duration > warmup >= 0 (duration = {}, warmup = {})",
                self.duration, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidSimConfig(
                "replications must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Generator for replication stream `stream` under `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for replication `replication` of sweep point `point`.
pub fn stream_id(point: usize, replication: usize) -> u64 {
    ((point as u64) << 32) | replication as u64
}

/// One run on stream 0 of `sim.seed`.
pub fn run_simulation(
    scenario: &ScenarioConfig,
    timing: &TimingTable,
    lambda: f64,
    sim: &SimConfig,
) -> Result<SimStats> {
    Ok(
        Simulation::new(scenario, timing, lambda, sim, rng_for(sim.seed, 0))?
            .run()?
            .stats,
    )
}

#[derive(Debug, Clone)]
pub struct Replicated {
    pub runs: Vec<SimStats>,
    /// `None` when fewer than two runs had attempts to count.
    pub summary: Option<PerSummary>,
    pub transmissions: Vec<Vec<Transmission>>,
}

/// `sim.replications` independent runs for sweep point `point`, in parallel.
/// With `record` set the finished transmissions of each run are kept.
pub fn run_replications(
    scenario: &ScenarioConfig,
    timing: &TimingTable,
    lambda: f64,
    sim: &SimConfig,
    point: usize,
    record: bool,
) -> Result<Replicated> {
    sim.validate()?;
    let outcomes: Vec<SimOutcome> = (0..sim.replications)
        .into_par_iter()
        .map(|rep| {
            let rng = rng_for(sim.seed, stream_id(point, rep));
            let simulation = Simulation::new(scenario, timing, lambda, sim, rng)?;
            if record {
                simulation.record_transmissions().run()
            } else {
                simulation.run()
            }
        })
        .collect::<Result<_>>()?;
    let (runs, transmissions): (Vec<_>, Vec<_>) = outcomes
        .into_iter()
        .map(|o| (o.stats, o.transmissions))
        .unzip();
    let summary = match estimate_per(&runs) {
        Ok(s) => Some(s),
        Err(Error::InsufficientReplications { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Replicated {
        runs,
        summary,
        transmissions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airtime::build_timing_table;
    use crate::scenario::paper_preset;

    fn short() -> SimConfig {
        SimConfig {
            duration: 20_000.0,
            warmup: 500.0,
            seed: 11,
            replications: 3,
            rate_decrement: false,
        }
    }

    #[test]
    fn sim_config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig {
            warmup: 10.0,
            duration: 10.0,
            ..SimConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidSimConfig(_))));
        let bad = SimConfig {
            warmup: -1.0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            replications: 0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rate_assignment_follows_distribution() {
        let rates = assign_rates(1000, &[0.28, 0.2, 0.14, 0.1, 0.08, 0.2]);
        let counts: Vec<usize> = (0..6)
            .map(|r| rates.iter().filter(|&&x| x == r).count())
            .collect();
        assert_eq!(counts, vec![280, 200, 140, 100, 80, 200]);
        let rates = assign_rates(7, &[0.5, 0.5]);
        assert_eq!(rates.len(), 7);
        let rates = assign_rates(3, &[1.0 / 3.0; 3]);
        assert_eq!(rates, vec![0, 1, 2]);
    }

    #[test]
    fn zero_load_generates_nothing() {
        let cfg = paper_preset();
        let timing = build_timing_table(&cfg).unwrap();
        let stats = run_simulation(&cfg, &timing, 0.0, &short()).unwrap();
        assert_eq!(stats.frames_generated, 0);
        assert_eq!(stats.attempts_total, 0);
        assert!(stats.per().is_none());
        let reps = run_replications(&cfg, &timing, 0.0, &short(), 0, false).unwrap();
        assert!(reps.summary.is_none());
    }

    #[test]
    fn single_mote_never_fails() {
        let mut cfg = paper_preset();
        cfg.n_motes = 1;
        let timing = build_timing_table(&cfg).unwrap();
        // one frame every ~3 s keeps the mote busy and superseding
        let stats = run_simulation(&cfg, &timing, 0.3, &short()).unwrap();
        assert!(stats.attempts_total > 1000);
        assert_eq!(stats.attempts_successful, stats.attempts_total);
        assert_eq!(stats.per().unwrap().value, 0.0);
        assert!(stats.frames_superseded > 0);
        assert!(stats.is_conserved());
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = paper_preset();
        let timing = build_timing_table(&cfg).unwrap();
        let a = run_simulation(&cfg, &timing, 0.5, &short()).unwrap();
        let b = run_simulation(&cfg, &timing, 0.5, &short()).unwrap();
        assert_eq!(a, b);
        let other = SimConfig {
            seed: 12,
            ..short()
        };
        let c = run_simulation(&cfg, &timing, 0.5, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_collisions_means_no_errors() {
        let cfg = paper_preset();
        let timing = build_timing_table(&cfg).unwrap();
        let sim = short();
        let out = Simulation::new(&cfg, &timing, 2.0, &sim, rng_for(3, 0))
            .unwrap()
            .without_collisions()
            .run()
            .unwrap();
        assert!(out.stats.attempts_total > 10_000);
        assert_eq!(out.stats.per().unwrap().value, 0.0);
        assert_eq!(out.stats.per1().unwrap().value, 0.0);
    }

    #[test]
    fn conservation_and_audit_under_load() {
        let cfg = paper_preset();
        let timing = build_timing_table(&cfg).unwrap();
        for lambda in [0.01, 0.1, 1.0] {
            let reps = run_replications(&cfg, &timing, lambda, &short(), 0, true).unwrap();
            for (stats, txs) in reps.runs.iter().zip(&reps.transmissions) {
                assert!(stats.is_conserved(), "{stats:?}");
                let violations = audit_transmissions(txs);
                assert!(
                    violations.is_empty(),
                    "{lambda}: {:?}",
                    &violations[..violations.len().min(3)]
                );
                for tx in txs {
                    let expected = match tx.kind {
                        TxKind::Data => timing.t_data[tx.rate],
                        TxKind::Ack1 => timing.t_ack[tx.rate],
                        TxKind::Ack2 => timing.ack2_duration(),
                    };
                    assert!((tx.end - tx.start - expected).abs() < 1e-9);
                    match tx.kind {
                        TxKind::Ack2 => assert_eq!((tx.channel, tx.rate), (3, 0)),
                        _ => assert!(tx.channel < 3),
                    }
                }
            }
        }
    }

    #[test]
    fn supersession_grows_with_load() {
        let cfg = paper_preset();
        let timing = build_timing_table(&cfg).unwrap();
        let sim = short();
        let tiny = run_simulation(&cfg, &timing, 1e-3, &sim).unwrap();
        assert_eq!(tiny.frames_superseded, 0);
        let mut last = 0.0;
        for lambda in [0.3, 1.0, 3.0] {
            let s = run_simulation(&cfg, &timing, lambda, &sim).unwrap();
            let rate = s.frames_superseded as f64 / s.frames_generated as f64;
            assert!(rate > last, "{lambda}: {rate} <= {last}");
            last = rate;
        }
    }

    #[test]
    fn rate_decrement_runs() {
        let cfg = paper_preset();
        let timing = build_timing_table(&cfg).unwrap();
        let sim = SimConfig {
            rate_decrement: true,
            ..short()
        };
        let stats = run_simulation(&cfg, &timing, 0.5, &sim).unwrap();
        assert!(stats.is_conserved());
        assert!(stats.attempts_total > 0);
    }

    #[test]
    fn trace_lines_are_well_formed() {
        let mut cfg = paper_preset();
        cfg.n_motes = 20;
        let timing = build_timing_table(&cfg).unwrap();
        let sim = SimConfig {
            duration: 2_000.0,
            warmup: 0.0,
            ..short()
        };
        let mut buf = Vec::new();
        Simulation::new(&cfg, &timing, 0.5, &sim, rng_for(1, 0))
            .unwrap()
            .with_trace(&mut buf)
            .run()
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        let mut prev = 0.0;
        let mut count = 0;
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5, "{line}");
            let t: f64 = fields[0].parse().unwrap();
            assert!(t >= prev);
            prev = t;
            count += 1;
        }
        assert!(count > 100);
        assert!(text.contains("data_start") && text.contains("delivered"));
    }
}
