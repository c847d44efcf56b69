//! Event loop for one simulation run.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::medium::{Medium, Transmission, TxKind};
use super::mote::{mote_step, Frame, MoteAction, MoteEvent, MotePhase, MoteRules, MoteState};
use super::queue::EventQueue;
use super::stats::SimStats;
use super::trace::{write_trace_line, TRACE_HEADER};
use super::SimConfig;
use crate::airtime::TimingTable;
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy)]
enum SimEvent {
    Arrival {
        mote: usize,
    },
    DataEnd {
        mote: usize,
        channel: usize,
        rate: usize,
        tx: u64,
    },
    Ack1Slot {
        mote: usize,
        token: u64,
        channel: usize,
        rate: usize,
        data_ok: bool,
    },
    Ack1End {
        mote: usize,
        token: u64,
        channel: usize,
        ack_rate: usize,
        tx: u64,
    },
    Ack2Slot {
        mote: usize,
        token: u64,
        data_ok: bool,
    },
    Ack2End {
        mote: usize,
        token: u64,
        tx: u64,
    },
    Ack2WindowClose {
        mote: usize,
        token: u64,
    },
    BackoffEnd {
        mote: usize,
    },
}

/// Result of [`Simulation::run`].
#[derive(Debug)]
pub struct SimOutcome {
    pub stats: SimStats,
    /// Finished transmissions, if recording was enabled.
    pub transmissions: Vec<Transmission>,
}

/// Splits `n_motes` over rates by largest remainder so per-rate mote counts
/// follow the distribution as closely as integers allow.
pub fn assign_rates(n_motes: usize, probabilities: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = probabilities.iter().map(|p| p * n_motes as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &rate in order.iter().cycle().take(n_motes.saturating_sub(assigned)) {
        counts[rate] += 1;
    }
    counts
        .iter()
        .enumerate()
        .flat_map(|(rate, &count)| std::iter::repeat_n(rate, count))
        .collect()
}

pub struct Simulation<'a> {
    timing: &'a TimingTable,
    config: &'a SimConfig,
    rules: MoteRules,
    retry_window: f64,
    lambda: f64,
    n_channels: usize,
    downlink: usize,
    rng: ChaCha8Rng,
    queue: EventQueue<SimEvent>,
    medium: Medium,
    motes: Vec<MoteState>,
    /// Data transmission id of each mote's attempt in progress.
    tokens: Vec<u64>,
    stats: SimStats,
    next_tx: u64,
    next_frame: u64,
    record: bool,
    transmissions: Vec<Transmission>,
    trace: Option<&'a mut dyn Write>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        scenario: &ScenarioConfig,
        timing: &'a TimingTable,
        lambda: f64,
        config: &'a SimConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidSimConfig(format!(
                "load must be finite and nonnegative, got {lambda}"
            )));
        }
        if timing.n_rates() != scenario.n_rates() {
            return Err(Error::InvalidSimConfig(
                "timing table does not match the scenario".into(),
            ));
        }
        let n_channels = scenario.n_channels as usize;
        let motes = assign_rates(scenario.n_motes as usize, scenario.rates.probabilities())
            .into_iter()
            .enumerate()
            .map(|(id, rate)| MoteState::new(id, rate))
            .collect::<Vec<_>>();
        Ok(Self {
            timing,
            config,
            rules: MoteRules {
                retry_limit: scenario.retry_limit,
                rate_decrement: config.rate_decrement,
            },
            retry_window: scenario.retry_window_w,
            lambda,
            n_channels,
            downlink: n_channels,
            rng,
            queue: EventQueue::new(),
            medium: Medium::new(n_channels + 1, scenario.n_rates()),
            tokens: vec![u64::MAX; motes.len()],
            motes,
            stats: SimStats {
                lambda,
                ..Default::default()
            },
            next_tx: 0,
            next_frame: 0,
            record: false,
            transmissions: Vec::new(),
            trace: None,
        })
    }

    /// Keep every finished transmission for auditing.
    pub fn record_transmissions(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn with_trace(mut self, out: &'a mut dyn Write) -> Self {
        self.trace = Some(out);
        self
    }

    /// Test hook: nothing ever collides.
    pub fn without_collisions(mut self) -> Self {
        self.medium.disable_collisions();
        self
    }

    fn trace(
        &mut self,
        time: f64,
        mote: usize,
        event: &str,
        radio: Option<(usize, usize)>,
    ) -> Result<()> {
        if let Some(out) = self.trace.as_mut() {
            write_trace_line(*out, time, mote, event, radio)?;
        }
        Ok(())
    }

    fn counted(&self, t: f64) -> bool {
        t >= self.config.warmup
    }

    pub fn run(mut self) -> Result<SimOutcome> {
        if let Some(out) = self.trace.as_mut() {
            writeln!(out, "{TRACE_HEADER}")?;
        }
        let per_mote = self.lambda / self.motes.len() as f64;
        let interarrival = (per_mote > 0.0).then(|| Exp::new(per_mote).expect("positive rate"));
        if let Some(exp) = interarrival {
            for mote in 0..self.motes.len() {
                let t = exp.sample(&mut self.rng);
                if t < self.config.duration {
                    self.queue.schedule(t, SimEvent::Arrival { mote });
                }
            }
        }

        while let Some((now, event)) = self.queue.pop() {
            if now > self.config.duration {
                break;
            }
            self.stats.events_processed += 1;
            self.handle(now, event, interarrival.as_ref())?;
        }

        if self.record {
            // cut off by the end of the run; kept so the audit sees their overlaps
            let unfinished = self.medium.drain();
            self.transmissions.extend(unfinished);
        }
        let warmup = self.config.warmup;
        self.stats.frames_in_flight = self
            .motes
            .iter()
            .flat_map(|m| m.frames_held())
            .filter(|f| f.generated_at >= warmup)
            .count() as u64;
        if let Some(out) = self.trace.as_mut() {
            out.flush()?;
        }
        Ok(SimOutcome {
            stats: self.stats,
            transmissions: self.transmissions,
        })
    }

    fn handle(&mut self, now: f64, event: SimEvent, interarrival: Option<&Exp<f64>>) -> Result<()> {
        match event {
            SimEvent::Arrival { mote } => {
                let frame = Frame {
                    id: self.next_frame,
                    generated_at: now,
                };
                self.next_frame += 1;
                if self.counted(now) {
                    self.stats.frames_generated += 1;
                }
                self.trace(now, mote, "arrival", None)?;
                if let Some(exp) = interarrival {
                    let next = now + exp.sample(&mut self.rng);
                    if next < self.config.duration {
                        self.queue.schedule(next, SimEvent::Arrival { mote });
                    }
                }
                self.step_mote(now, mote, MoteEvent::FrameArrival(frame))?;
            }
            SimEvent::DataEnd {
                mote,
                channel,
                rate,
                tx,
            } => {
                let data_ok = !self.finish_tx(channel, rate, tx).doomed;
                let name = if data_ok {
                    "data_end_ok"
                } else {
                    "data_end_collided"
                };
                self.trace(now, mote, name, Some((channel, rate)))?;
                self.queue.schedule(
                    now + self.timing.t1,
                    SimEvent::Ack1Slot {
                        mote,
                        token: tx,
                        channel,
                        rate,
                        data_ok,
                    },
                );
                self.queue.schedule(
                    now + self.timing.t2,
                    SimEvent::Ack2Slot {
                        mote,
                        token: tx,
                        data_ok,
                    },
                );
                self.motes[mote].next_event_time = Some(now + self.timing.t1);
                self.step_mote(now, mote, MoteEvent::TransmissionEnded)?;
            }
            SimEvent::Ack1Slot {
                mote,
                token,
                channel,
                rate,
                data_ok,
            } => {
                let ack_rate = self.timing.ack1_rate[rate];
                if !data_ok {
                    self.notify(now, mote, token, MoteEvent::Ack1Missed)?;
                } else if self.medium.receiving_data(channel, ack_rate, now) {
                    self.stats.ack1_cancelled += 1;
                    self.trace(now, mote, "ack1_cancelled", Some((channel, ack_rate)))?;
                    self.notify(now, mote, token, MoteEvent::Ack1Missed)?;
                } else {
                    let end = now + self.timing.t_ack[rate];
                    let tx = self.start_tx(TxKind::Ack1, mote, channel, ack_rate, now, end);
                    self.trace(now, mote, "ack1_start", Some((channel, ack_rate)))?;
                    self.queue.schedule(
                        end,
                        SimEvent::Ack1End {
                            mote,
                            token,
                            channel,
                            ack_rate,
                            tx,
                        },
                    );
                }
            }
            SimEvent::Ack1End {
                mote,
                token,
                channel,
                ack_rate,
                tx,
            } => {
                let ok = !self.finish_tx(channel, ack_rate, tx).doomed;
                self.trace(
                    now,
                    mote,
                    if ok { "ack1_end_ok" } else { "ack1_end_lost" },
                    Some((channel, ack_rate)),
                )?;
                let event = if ok {
                    MoteEvent::AckReceived
                } else {
                    MoteEvent::Ack1Missed
                };
                self.notify(now, mote, token, event)?;
            }
            SimEvent::Ack2Slot {
                mote,
                token,
                data_ok,
            } => {
                let end = now + self.timing.ack2_duration();
                if data_ok {
                    let tx = self.start_tx(TxKind::Ack2, mote, self.downlink, 0, now, end);
                    self.trace(now, mote, "ack2_start", Some((self.downlink, 0)))?;
                    self.queue
                        .schedule(end, SimEvent::Ack2End { mote, token, tx });
                } else {
                    self.queue
                        .schedule(end, SimEvent::Ack2WindowClose { mote, token });
                }
            }
            SimEvent::Ack2End { mote, token, tx } => {
                let ok = !self.finish_tx(self.downlink, 0, tx).doomed;
                self.trace(
                    now,
                    mote,
                    if ok { "ack2_end_ok" } else { "ack2_end_lost" },
                    Some((self.downlink, 0)),
                )?;
                let event = if ok {
                    MoteEvent::AckReceived
                } else {
                    MoteEvent::Ack2Missed
                };
                self.notify(now, mote, token, event)?;
            }
            SimEvent::Ack2WindowClose { mote, token } => {
                self.notify(now, mote, token, MoteEvent::Ack2Missed)?;
            }
            SimEvent::BackoffEnd { mote } => {
                self.step_mote(now, mote, MoteEvent::BackoffExpired)?;
            }
        }
        Ok(())
    }

    /// Delivers an ACK-related event if the mote is still waiting on `token`.
    fn notify(&mut self, now: f64, mote: usize, token: u64, event: MoteEvent) -> Result<()> {
        let state = &self.motes[mote];
        let waiting = matches!(
            state.phase,
            MotePhase::AwaitingAck1 | MotePhase::AwaitingAck2
        );
        if self.tokens[mote] != token || !waiting {
            return Ok(());
        }
        // ACK1 outcome can only matter while ACK1 is still pending
        if event == MoteEvent::Ack1Missed && state.phase != MotePhase::AwaitingAck1 {
            return Ok(());
        }
        self.step_mote(now, mote, event)
    }

    fn start_tx(
        &mut self,
        kind: TxKind,
        mote: usize,
        channel: usize,
        rate: usize,
        start: f64,
        end: f64,
    ) -> u64 {
        let id = self.next_tx;
        self.next_tx += 1;
        self.medium.start(Transmission {
            id,
            kind,
            channel,
            rate,
            start,
            end,
            mote,
            doomed: false,
        });
        id
    }

    fn finish_tx(&mut self, channel: usize, rate: usize, id: u64) -> Transmission {
        let tx = self.medium.finish(channel, rate, id);
        if self.record {
            self.transmissions.push(tx.clone());
        }
        tx
    }

    fn step_mote(&mut self, now: f64, mote: usize, event: MoteEvent) -> Result<()> {
        let actions = mote_step(&mut self.motes[mote], event, now, &self.rules)?;
        for action in actions {
            match action {
                MoteAction::Transmit { rate, .. } => {
                    let channel = self.rng.random_range(0..self.n_channels);
                    let end = now + self.timing.t_data[rate];
                    let tx = self.start_tx(TxKind::Data, mote, channel, rate, now, end);
                    self.tokens[mote] = tx;
                    self.motes[mote].next_event_time = Some(end);
                    self.trace(now, mote, "data_start", Some((channel, rate)))?;
                    self.queue.schedule(
                        end,
                        SimEvent::DataEnd {
                            mote,
                            channel,
                            rate,
                            tx,
                        },
                    );
                }
                MoteAction::StartBackoff => {
                    let wait = 1.0 + self.rng.random::<f64>() * self.retry_window;
                    self.motes[mote].next_event_time = Some(now + wait);
                    self.trace(now, mote, "backoff", None)?;
                    self.queue
                        .schedule(now + wait, SimEvent::BackoffEnd { mote });
                }
                MoteAction::AttemptFinished {
                    attempt,
                    started_at,
                    success,
                } => {
                    if self.counted(started_at) {
                        self.stats.attempts_total += 1;
                        self.stats.attempts_successful += success as u64;
                        if attempt == 1 {
                            self.stats.first_attempts_total += 1;
                            self.stats.first_attempts_successful += success as u64;
                        }
                    }
                }
                MoteAction::Delivered(frame) => {
                    self.trace(now, mote, "delivered", None)?;
                    if self.counted(frame.generated_at) {
                        self.stats.frames_delivered += 1;
                    }
                }
                MoteAction::Dropped(frame) => {
                    self.trace(now, mote, "dropped", None)?;
                    if self.counted(frame.generated_at) {
                        self.stats.frames_dropped += 1;
                    }
                }
                MoteAction::Superseded(frame) => {
                    self.trace(now, mote, "superseded", None)?;
                    if self.counted(frame.generated_at) {
                        self.stats.frames_superseded += 1;
                    }
                }
            }
        }
        if self.motes[mote].phase == MotePhase::Idle {
            self.motes[mote].next_event_time = None;
        }
        Ok(())
    }
}
