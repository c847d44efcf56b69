//! Class A mote behaviour as a pure state machine.
//!
//! The engine feeds [`MoteEvent`]s in and carries out the returned
//! [`MoteAction`]s (radio transmissions, timers, bookkeeping). Randomness
//! (channel choice, backoff length) stays in the engine.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub id: u64,
    pub generated_at: f64,
}

/// A frame being worked on, with its attempt number (1 = first attempt).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveFrame {
    pub frame: Frame,
    pub attempt: u32,
    pub consecutive_failures: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotePhase {
    Idle,
    Transmitting,
    AwaitingAck1,
    AwaitingAck2,
    Backoff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MoteEvent {
    FrameArrival(Frame),
    TransmissionEnded,
    AckReceived,
    /// ACK1 was lost, cancelled, or never sent.
    Ack1Missed,
    /// The ACK2 window closed without an ACK.
    Ack2Missed,
    BackoffExpired,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MoteAction {
    /// Start a data transmission of the current frame at `rate`.
    Transmit {
        attempt: u32,
        rate: usize,
    },
    StartBackoff,
    AttemptFinished {
        attempt: u32,
        started_at: f64,
        success: bool,
    },
    Delivered(Frame),
    Dropped(Frame),
    Superseded(Frame),
}

#[derive(Debug, Clone, Copy)]
pub struct MoteRules {
    pub retry_limit: u32,
    /// Step one data rate down after every two consecutive failures.
    pub rate_decrement: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoteState {
    pub id: usize,
    /// Rate assigned by the gateway; every new frame starts here.
    pub base_rate: usize,
    /// Rate used by the current frame.
    pub rate: usize,
    pub phase: MotePhase,
    pub current: Option<ActiveFrame>,
    /// Most recent frame generated while `current` was in progress.
    pub newer: Option<Frame>,
    pub attempt_started_at: f64,
    /// Time of the next mote-owned timer, maintained by the engine.
    pub next_event_time: Option<f64>,
}

impl fmt::Display for MotePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl MoteState {
    pub fn new(id: usize, base_rate: usize) -> Self {
        Self {
            id,
            base_rate,
            rate: base_rate,
            phase: MotePhase::Idle,
            current: None,
            newer: None,
            attempt_started_at: 0.0,
            next_event_time: None,
        }
    }

    /// Frames held by the mote: the one in progress and a waiting newer one.
    pub fn frames_held(&self) -> impl Iterator<Item = Frame> + '_ {
        self.current
            .iter()
            .map(|a| a.frame)
            .chain(self.newer.iter().copied())
    }

    fn start(&mut self, frame: Frame, now: f64, actions: &mut Vec<MoteAction>) {
        self.current = Some(ActiveFrame {
            frame,
            attempt: 1,
            consecutive_failures: 0,
        });
        self.rate = self.base_rate;
        self.transmit(now, actions);
    }

    fn transmit(&mut self, now: f64, actions: &mut Vec<MoteAction>) {
        let attempt = self.current.expect("transmit without a frame").attempt;
        self.phase = MotePhase::Transmitting;
        self.attempt_started_at = now;
        actions.push(MoteAction::Transmit {
            attempt,
            rate: self.rate,
        });
    }

    /// Decision point after the current frame is finished with.
    fn next_frame(&mut self, now: f64, actions: &mut Vec<MoteAction>) {
        self.current = None;
        match self.newer.take() {
            Some(frame) => self.start(frame, now, actions),
            None => {
                self.phase = MotePhase::Idle;
                self.rate = self.base_rate;
            }
        }
    }

    fn illegal(&self, event: &MoteEvent) -> Error {
        Error::IllegalTransition {
            phase: self.phase.to_string(),
            event: format!("{event:?}"),
        }
    }
}

/// Advances `state` by one event and returns what the engine must do.
///
/// A frame arriving while another is in progress waits in `newer`; it
/// replaces the in-progress frame only at the next decision point (end of
/// the ACK2 window or end of a backoff), where the old frame is counted as
/// superseded unless it was delivered or has used up its retries.
pub fn mote_step(
    state: &mut MoteState,
    event: MoteEvent,
    now: f64,
    rules: &MoteRules,
) -> Result<Vec<MoteAction>> {
    use MotePhase::*;

    let mut actions = Vec::new();
    match (state.phase, event) {
        (Idle, MoteEvent::FrameArrival(frame)) => state.start(frame, now, &mut actions),
        (_, MoteEvent::FrameArrival(frame)) => {
            if let Some(older) = state.newer.replace(frame) {
                actions.push(MoteAction::Superseded(older));
            }
        }
        (Transmitting, MoteEvent::TransmissionEnded) => state.phase = AwaitingAck1,
        (AwaitingAck1 | AwaitingAck2, MoteEvent::AckReceived) => {
            let active = state.current.expect("awaiting ACK without a frame");
            actions.push(MoteAction::AttemptFinished {
                attempt: active.attempt,
                started_at: state.attempt_started_at,
                success: true,
            });
            actions.push(MoteAction::Delivered(active.frame));
            state.next_frame(now, &mut actions);
        }
        (AwaitingAck1, MoteEvent::Ack1Missed) => state.phase = AwaitingAck2,
        (AwaitingAck1 | AwaitingAck2, MoteEvent::Ack2Missed) => {
            let mut active = state.current.expect("awaiting ACK without a frame");
            actions.push(MoteAction::AttemptFinished {
                attempt: active.attempt,
                started_at: state.attempt_started_at,
                success: false,
            });
            active.consecutive_failures += 1;
            if rules.rate_decrement && active.consecutive_failures.is_multiple_of(2) {
                state.rate = state.rate.saturating_sub(1);
            }
            if active.attempt > rules.retry_limit {
                actions.push(MoteAction::Dropped(active.frame));
                state.next_frame(now, &mut actions);
            } else if state.newer.is_some() {
                actions.push(MoteAction::Superseded(active.frame));
                state.next_frame(now, &mut actions);
            } else {
                active.attempt += 1;
                state.current = Some(active);
                state.phase = Backoff;
                actions.push(MoteAction::StartBackoff);
            }
        }
        (Backoff, MoteEvent::BackoffExpired) => {
            if state.newer.is_some() {
                let active = state.current.expect("backoff without a frame");
                actions.push(MoteAction::Superseded(active.frame));
                state.next_frame(now, &mut actions);
            } else {
                state.transmit(now, &mut actions);
            }
        }
        (_, event) => return Err(state.illegal(&event)),
    }
    Ok(actions)
}
