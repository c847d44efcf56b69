//! Analytic model of acknowledged class A uplink channel access.
//!
//! First attempts see Poisson traffic, so their success probability follows
//! from per-(channel, rate) ALOHA-style vulnerability windows extended with
//! ACK collisions. Retransmissions are correlated with the collision that
//! caused them; their success is driven by the chance that the two colliding
//! motes collide again after drawing backoffs from the same window. The two
//! are mixed by the fraction of attempts that are first attempts.
//!
//! All functions are pure.

use serde::Serialize;

use crate::airtime::TimingTable;
use crate::error::{Error, Result};
use crate::scenario::{RateDistribution, ScenarioConfig};

pub const FIXED_POINT_TOLERANCE: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 10_000;

/// Below this `r·T` the repeat-collision probability uses its `r → 0` limit.
pub const PX_SMALL_ARGUMENT: f64 = 1e-4;

/// Out-of-range slack tolerated (and clamped) in probability closed forms.
const PROBABILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerRateModel {
    /// Load per (channel, rate) pair, frames/s.
    pub r: f64,
    pub p_data: f64,
    pub p_ack1: f64,
    pub p_ack2: f64,
    pub p_ack: f64,
    pub p_x: f64,
    pub p_data_re: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelResult {
    pub lambda: f64,
    pub per_rate: Vec<PerRateModel>,
    pub p_s1: f64,
    pub p_s_re: f64,
    pub p_n: f64,
    pub p_1: f64,
    pub p_s: f64,
    pub per: f64,
    pub per1: f64,
    pub lambda_star: f64,
}

impl ModelResult {
    /// Whether `lambda` lies in the region where the model is expected to hold.
    pub fn is_valid(&self) -> bool {
        self.lambda <= self.lambda_star
    }
}

/// Load on one (channel, rate) pair, `λ p_i / F`.
pub fn channel_rate_load(lambda: f64, p_i: f64, n_channels: u32) -> f64 {
    lambda * p_i / f64::from(n_channels)
}

/// Probability that a data frame avoids every other frame and every ACK on
/// its channel and rate: the fixed point of `P = exp(-(2 T_data + P T_ack) r)`.
///
/// Picard iteration from `P = 1`; if the step stops shrinking the solver
/// falls back to bisection on `P - exp(...)`, which is increasing in `P`.
pub fn solve_p_data(r: f64, t_data: f64, t_ack: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(1.0);
    }
    let g = |p: f64| (-(2.0 * t_data + p * t_ack) * r).exp();
    let residual = |p: f64| (p - g(p)).abs();

    let mut p = 1.0;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < FIXED_POINT_MAX_ITERATIONS {
        iterations += 1;
        let next = g(p);
        let step = (next - p).abs();
        p = next;
        // Stop well inside the tolerance so the reported residual has margin.
        if residual(p) < FIXED_POINT_TOLERANCE * 1e-2 {
            return Ok(p);
        }
        if step >= last_step {
            break;
        }
        last_step = step;
    }

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while iterations < FIXED_POINT_MAX_ITERATIONS {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid - g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let candidate = 0.5 * (lo + hi);
        if residual(candidate) < FIXED_POINT_TOLERANCE || hi - lo <= f64::EPSILON {
            if residual(candidate) < FIXED_POINT_TOLERANCE {
                return Ok(candidate);
            }
            break;
        }
    }
    let best = 0.5 * (lo + hi);
    Err(Error::NonConvergence {
        iterations,
        residual: residual(best),
    })
}

/// ACK1 survives if no same-rate frame starts in the `min(T1, T_data)` before
/// it (the gateway would be receiving and cancel it) or during it.
pub fn p_ack1(r: f64, t_data: f64, t_ack: f64, t1: f64) -> f64 {
    (-(t1.min(t_data) + t_ack) * r).exp()
}

/// ACK2 survives if no successfully received frame on any other (channel,
/// rate) pair produced an ACK2 in the preceding ACK2 duration.
pub fn p_ack2(
    lambda: f64,
    p_i: f64,
    n_channels: u32,
    p_data_all: &[f64],
    rates: &RateDistribution,
    t_ack0: f64,
) -> f64 {
    debug_assert_eq!(p_data_all.len(), rates.len());
    let delivered: f64 = p_data_all
        .iter()
        .zip(rates.probabilities())
        .map(|(pd, p)| pd * p)
        .sum();
    (-t_ack0 * lambda * (1.0 - p_i / f64::from(n_channels)) * delivered).exp()
}

/// At least one of two independent ACKs arrives.
pub fn p_ack_combined(a1: f64, a2: f64) -> f64 {
    a1 + a2 - a1 * a2
}

fn clamp_probability(value: f64, r: f64, t: f64, w: f64) -> Result<f64> {
    if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&value) {
        return Err(Error::NumericInstability { value, r, t, w });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// `(u coth u - 1) / u^2`, evaluated without cancellation for small `u`.
fn coth_term(u: f64) -> f64 {
    if u < 0.05 {
        let u2 = u * u;
        // Taylor series; the next term is O(u^10).
        1.0 / 3.0
            + u2 * (-1.0 / 45.0 + u2 * (2.0 / 945.0 + u2 * (-1.0 / 4725.0 + u2 * (2.0 / 93555.0))))
    } else {
        (u / u.tanh() - 1.0) / (u * u)
    }
}

/// Probability that two motes whose frames collided (start offset drawn
/// from the Poisson gap density truncated to `[0, t]`) collide again when
/// both retry in the same channel with backoffs uniform over a window of
/// width `w`.
///
/// Closed form of the averaged overlap integral:
/// `t/w² (2w − 3t/2 − 2/(t r²) + 1/(r tanh(r t / 2)))`, or its limit
/// `t/w² (2w − 4t/3)` for `r t` below [`PX_SMALL_ARGUMENT`]. The closed form
/// is exact while `2t ≤ w`; for longer frames it underestimates the
/// overlap integral.
pub fn p_x_retry(r: f64, t: f64, w: f64) -> Result<f64> {
    if !(t > 0.0) || !(w > 0.0) || !(r >= 0.0) {
        return Err(Error::InvalidField {
            field: "p_x_retry",
            reason: format!("need t > 0, w > 0, r >= 0 (r = {r}, t = {t}, w = {w})"),
        });
    }
    let scale = t / (w * w);
    let value = if r * t < PX_SMALL_ARGUMENT {
        scale * (2.0 * w - 4.0 * t / 3.0)
    } else {
        // -2/(t r²) + 1/(r tanh(rt/2)) rewritten in u = rt/2
        let u = 0.5 * r * t;
        scale * (2.0 * w - 1.5 * t + 0.5 * t * coth_term(u))
    };
    clamp_probability(value, r, t, w)
}

/// Retry success against the partner of the previous collision, `1 − 2 P_x / F`.
pub fn p_data_retry(p_x: f64, n_channels: u32) -> Result<f64> {
    let value = 1.0 - 2.0 * p_x / f64::from(n_channels);
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvariantViolation(format!(
            "retry success probability {value} outside [0, 1] (p_x = {p_x}, F = {n_channels})"
        )));
    }
    Ok(value)
}

/// Per-rate model quantities at load `lambda`.
pub fn per_rate_terms(
    config: &ScenarioConfig,
    timing: &TimingTable,
    lambda: f64,
) -> Result<Vec<PerRateModel>> {
    let f = config.n_channels;
    let probs = config.rates.probabilities();
    let loads: Vec<f64> = probs
        .iter()
        .map(|&p| channel_rate_load(lambda, p, f))
        .collect();
    let p_data: Vec<f64> = loads
        .iter()
        .enumerate()
        .map(|(i, &r)| solve_p_data(r, timing.t_data[i], timing.t_ack[i]))
        .collect::<Result<_>>()?;

    probs
        .iter()
        .enumerate()
        .map(|(i, &p_i)| {
            let r = loads[i];
            let p_ack1 = p_ack1(r, timing.t_data[i], timing.t_ack[i], timing.t1);
            let p_ack2 = p_ack2(
                lambda,
                p_i,
                f,
                &p_data,
                &config.rates,
                timing.ack2_duration(),
            );
            let p_x = p_x_retry(r, timing.t_data[i], config.retry_window_w)?;
            Ok(PerRateModel {
                r,
                p_data: p_data[i],
                p_ack1,
                p_ack2,
                p_ack: p_ack_combined(p_ack1, p_ack2),
                p_x,
                p_data_re: p_data_retry(p_x, f)?,
            })
        })
        .collect()
}

/// First-attempt success `Σ p_i P^Data_i P^Ack_i` and its per-rate terms.
pub fn p_success_first(
    config: &ScenarioConfig,
    timing: &TimingTable,
    lambda: f64,
) -> Result<(f64, Vec<PerRateModel>)> {
    let terms = per_rate_terms(config, timing, lambda)?;
    Ok((weighted_success(&config.rates, &terms, |t| t.p_data), terms))
}

/// Retry success: the first-attempt sum with the retry data-success term,
/// ACK factors unchanged.
pub fn p_success_retry(config: &ScenarioConfig, timing: &TimingTable, lambda: f64) -> Result<f64> {
    let terms = per_rate_terms(config, timing, lambda)?;
    Ok(weighted_success(&config.rates, &terms, |t| t.p_data_re))
}

fn weighted_success(
    rates: &RateDistribution,
    terms: &[PerRateModel],
    data: impl Fn(&PerRateModel) -> f64,
) -> f64 {
    rates
        .probabilities()
        .iter()
        .zip(terms)
        .map(|(p, t)| p * data(t) * t.p_ack)
        .sum()
}

/// Probability that no new frame reaches the mote during one attempt cycle.
pub fn p_new_frame(config: &ScenarioConfig, timing: &TimingTable, lambda: f64) -> f64 {
    let per_mote = lambda / f64::from(config.n_motes);
    config
        .rates
        .probabilities()
        .iter()
        .enumerate()
        .map(|(i, p)| p * (-per_mote * timing.cycle_time(i)).exp())
        .sum()
}

/// Fraction of attempts that are first attempts: the inverse of the mean
/// number of attempts per frame.
pub fn p_first_attempt(p_s1: f64, p_s_re: f64, p_n: f64, retry_limit: u32) -> f64 {
    let mut retries = 0.0;
    let mut term = p_n;
    for _ in 0..=retry_limit {
        retries += term;
        term *= (1.0 - p_s_re) * p_n;
    }
    1.0 / (1.0 + (1.0 - p_s1) * retries)
}

/// Load at which frames are dropped after exhausting retries as fast as they
/// arrive; the model is not meant to be used above it. Infinite when
/// `retry_limit` is zero.
pub fn lambda_star(config: &ScenarioConfig, timing: &TimingTable) -> f64 {
    let mean_cycle: f64 = config
        .rates
        .probabilities()
        .iter()
        .enumerate()
        .map(|(i, p)| p * timing.cycle_time(i))
        .sum();
    f64::from(config.n_channels) / (mean_cycle * f64::from(config.retry_limit))
}

pub fn evaluate_model(
    config: &ScenarioConfig,
    timing: &TimingTable,
    lambda: f64,
) -> Result<ModelResult> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidField {
            field: "lambda",
            reason: format!("must be a finite nonnegative load, got {lambda}"),
        });
    }
    let terms = per_rate_terms(config, timing, lambda)?;
    let p_s1 = weighted_success(&config.rates, &terms, |t| t.p_data);
    let p_s_re = weighted_success(&config.rates, &terms, |t| t.p_data_re);
    let p_n = p_new_frame(config, timing, lambda);
    let p_1 = p_first_attempt(p_s1, p_s_re, p_n, config.retry_limit);
    let p_s = p_1 * p_s1 + (1.0 - p_1) * p_s_re;
    Ok(ModelResult {
        lambda,
        per_rate: terms,
        p_s1,
        p_s_re,
        p_n,
        p_1,
        p_s,
        per: 1.0 - p_s,
        per1: 1.0 - p_s1,
        lambda_star: lambda_star(config, timing),
    })
}
