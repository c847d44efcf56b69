//! LoRa time-on-air and the per-rate timing table.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{LdroPolicy, ScenarioConfig, MAX_PHY_PAYLOAD};

/// Symbol time above which LDRO is switched on under [`LdroPolicy::Auto`].
pub const LDRO_SYMBOL_TIME_THRESHOLD: f64 = 0.016;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirtimeQuery {
    pub phy_payload_bytes: u32,
    pub spreading_factor: u8,
    pub bandwidth_hz: f64,
    /// Coding rate 4/(4 + index), index in 1..=4.
    pub coding_rate_index: u8,
    pub preamble_symbols: u16,
    pub explicit_header: bool,
    pub crc: bool,
    pub ldro: bool,
}

/// Duration of one LoRa symbol, `2^sf / bw` seconds.
pub fn symbol_time(spreading_factor: u8, bandwidth_hz: f64) -> Result<f64> {
    if !(7..=12).contains(&spreading_factor) {
        return Err(Error::SpreadingFactorOutOfRange(spreading_factor));
    }
    if !(bandwidth_hz > 0.0) {
        return Err(Error::InvalidField {
            field: "bandwidth_hz",
            reason: format!("must be positive, got {bandwidth_hz}"),
        });
    }
    Ok(f64::from(1u32 << spreading_factor) / bandwidth_hz)
}

pub fn resolve_ldro(policy: LdroPolicy, spreading_factor: u8, bandwidth_hz: f64) -> Result<bool> {
    Ok(match policy {
        LdroPolicy::On => true,
        LdroPolicy::Off => false,
        LdroPolicy::Auto => {
            symbol_time(spreading_factor, bandwidth_hz)? > LDRO_SYMBOL_TIME_THRESHOLD
        }
    })
}

impl AirtimeQuery {
    fn validate(&self) -> Result<()> {
        symbol_time(self.spreading_factor, self.bandwidth_hz)?;
        if self.phy_payload_bytes > MAX_PHY_PAYLOAD {
            return Err(Error::InvalidField {
                field: "phy_payload_bytes",
                reason: format!("{} exceeds {MAX_PHY_PAYLOAD}", self.phy_payload_bytes),
            });
        }
        if !(1..=4).contains(&self.coding_rate_index) {
            return Err(Error::InvalidField {
                field: "coding_rate_index",
                reason: format!("must be in 1..=4, got {}", self.coding_rate_index),
            });
        }
        if self.preamble_symbols == 0 {
            return Err(Error::InvalidField {
                field: "preamble_symbols",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Number of payload symbols (header, payload and CRC), including the
    /// 8 symbols that are always sent at CR 4/8.
    pub fn payload_symbols(&self) -> u32 {
        let sf = i64::from(self.spreading_factor);
        let numerator =
            8 * i64::from(self.phy_payload_bytes) - 4 * sf + 28 + if self.crc { 16 } else { 0 }
                - if self.explicit_header { 0 } else { 20 };
        let denominator = 4 * (sf - if self.ldro { 2 } else { 0 });
        let blocks = if numerator > 0 {
            (numerator + denominator - 1) / denominator
        } else {
            0
        };
        8 + (blocks * (i64::from(self.coding_rate_index) + 4)) as u32
    }
}

/// Time on air in seconds: preamble (`n + 4.25` symbols) plus payload symbols.
pub fn time_on_air(query: &AirtimeQuery) -> Result<f64> {
    query.validate()?;
    let ts = symbol_time(query.spreading_factor, query.bandwidth_hz)?;
    let preamble = (f64::from(query.preamble_symbols) + 4.25) * ts;
    Ok(preamble + f64::from(query.payload_symbols()) * ts)
}

/// Per-rate frame and ACK durations plus the protocol delays, all in seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingTable {
    /// Data frame duration at each rate.
    pub t_data: Vec<f64>,
    /// ACK1 duration for a frame sent at each rate; `t_ack[0]` is also the
    /// ACK2 duration since ACK2 always uses the lowest rate.
    pub t_ack: Vec<f64>,
    /// Rate index ACK1 is sent at, per uplink rate.
    pub ack1_rate: Vec<usize>,
    pub t1: f64,
    pub t2: f64,
    pub t_wait_mean: f64,
}

impl TimingTable {
    pub fn n_rates(&self) -> usize {
        self.t_data.len()
    }

    pub fn ack2_duration(&self) -> f64 {
        self.t_ack[0]
    }

    /// Expected length of one failed attempt cycle at `rate`: frame, wait for
    /// ACK2, ACK2 window and mean backoff.
    pub fn cycle_time(&self, rate: usize) -> f64 {
        self.t_data[rate] + self.t2 + self.ack2_duration() + self.t_wait_mean
    }
}

pub fn build_timing_table(config: &ScenarioConfig) -> Result<TimingTable> {
    let radio = &config.radio;
    let query_at = |rate: usize, payload: u32, crc: bool| -> Result<AirtimeQuery> {
        let dr = radio.data_rates[rate];
        Ok(AirtimeQuery {
            phy_payload_bytes: payload,
            spreading_factor: dr.spreading_factor,
            bandwidth_hz: dr.bandwidth_hz,
            coding_rate_index: radio.coding_rate_index,
            preamble_symbols: radio.preamble_symbols,
            explicit_header: radio.explicit_header,
            crc,
            ldro: resolve_ldro(radio.ldro, dr.spreading_factor, dr.bandwidth_hz)?,
        })
    };

    let data_payload = config.frm_payload_bytes + radio.data_overhead_bytes;
    let n = config.n_rates();
    let mut t_data = Vec::with_capacity(n);
    let mut t_ack = Vec::with_capacity(n);
    let mut ack1_rate = Vec::with_capacity(n);
    for rate in 0..n {
        t_data.push(time_on_air(&query_at(
            rate,
            data_payload,
            radio.uplink_crc,
        )?)?);
        let ack_rate = rate.saturating_sub(radio.ack1_rate_offset);
        ack1_rate.push(ack_rate);
        t_ack.push(time_on_air(&query_at(
            ack_rate,
            radio.ack_phy_payload_bytes,
            radio.downlink_crc,
        )?)?);
    }

    Ok(TimingTable {
        t_data,
        t_ack,
        ack1_rate,
        t1: config.t1,
        t2: config.t2(),
        t_wait_mean: config.t_wait_mean(),
    })
}
