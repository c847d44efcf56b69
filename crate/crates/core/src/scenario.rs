//! Network scenario description shared by the analytic model and the simulator.
//!
//! A [`ScenarioConfig`] is plain data. Call [`validate_scenario`] (or
//! [`ScenarioConfig::validate`]) before handing it to the model or the
//! simulator; both assume the invariants checked there.
//!
//! Config files are TOML, one key per field:
//!
//! ```toml
//! n_motes = 1000
//! n_channels = 3
//! rates = [0.28, 0.2, 0.14, 0.1, 0.08, 0.2]
//! retry_window_w = 2.0
//! retry_limit = 7
//! t1 = 1.0
//! frm_payload_bytes = 51
//!
//! [radio]
//! coding_rate_index = 1
//! preamble_symbols = 8
//! explicit_header = true
//! uplink_crc = true
//! downlink_crc = false
//! ldro = "auto"
//! data_overhead_bytes = 13
//! ack_phy_payload_bytes = 12
//! ack1_rate_offset = 0
//! data_rates = [
//!     { spreading_factor = 12, bandwidth_hz = 125000.0 },
//!     # ... one entry per data rate
//! ]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a rate distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Largest LoRa PHY payload.
pub const MAX_PHY_PAYLOAD: u32 = 255;

/// Fixed gap between the two receive windows.
pub const RX2_DELAY_AFTER_RX1: f64 = 1.0;

/// Probability that a mote uses data rate `i`, indexed by rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateDistribution {
    probabilities: Vec<f64>,
}

impl RateDistribution {
    /// Wraps raw probabilities without checking them; see [`RateDistribution::validate`].
    pub fn new(probabilities: Vec<f64>) -> Self {
        Self { probabilities }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn get(&self, rate: usize) -> f64 {
        self.probabilities[rate]
    }

    pub fn validate(&self) -> Result<()> {
        const FIELD: &str = "rates";
        if self.probabilities.is_empty() {
            return Err(Error::EmptyRates { field: FIELD });
        }
        for (index, &value) in self.probabilities.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ProbabilityOutOfRange {
                    field: FIELD,
                    index,
                    value,
                });
            }
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::DistributionNotNormalized { field: FIELD, sum });
        }
        Ok(())
    }
}

/// Low data rate optimization selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LdroPolicy {
    /// On iff the symbol time exceeds 16 ms (SF11 and SF12 at 125 kHz).
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRateParams {
    pub spreading_factor: u8,
    pub bandwidth_hz: f64,
}

/// PHY and MAC framing parameters used to derive airtimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// One entry per data rate index.
    pub data_rates: Vec<DataRateParams>,
    /// Coding rate 4/(4 + index).
    pub coding_rate_index: u8,
    pub preamble_symbols: u16,
    pub explicit_header: bool,
    pub uplink_crc: bool,
    pub downlink_crc: bool,
    pub ldro: LdroPolicy,
    /// MHDR + FHDR + FPort + MIC bytes added to the frame payload of data frames.
    pub data_overhead_bytes: u32,
    /// PHY payload of a payload-free ACK.
    pub ack_phy_payload_bytes: u32,
    /// ACK1 is sent `ack1_rate_offset` data rates below the uplink rate (floored at 0).
    #[serde(default)]
    pub ack1_rate_offset: usize,
}

impl RadioParams {
    /// EU868 mapping DR0 = SF12 ... DR5 = SF7, all at 125 kHz, CR 4/5.
    pub fn eu868() -> Self {
        let data_rates = (7..=12u8)
            .rev()
            .map(|spreading_factor| DataRateParams {
                spreading_factor,
                bandwidth_hz: 125_000.0,
            })
            .collect();
        Self {
            data_rates,
            coding_rate_index: 1,
            preamble_symbols: 8,
            explicit_header: true,
            uplink_crc: true,
            downlink_crc: false,
            ldro: LdroPolicy::Auto,
            data_overhead_bytes: 13,
            ack_phy_payload_bytes: 12,
            ack1_rate_offset: 0,
        }
    }

    fn validate(&self, n_rates: usize) -> Result<()> {
        if self.data_rates.len() != n_rates {
            return Err(Error::InvalidField {
                field: "radio.data_rates",
                reason: format!(
                    "{} entries for {} data rates",
                    self.data_rates.len(),
                    n_rates
                ),
            });
        }
        for dr in &self.data_rates {
            if !(7..=12).contains(&dr.spreading_factor) {
                return Err(Error::SpreadingFactorOutOfRange(dr.spreading_factor));
            }
            if !(dr.bandwidth_hz > 0.0) || !dr.bandwidth_hz.is_finite() {
                return Err(Error::InvalidField {
                    field: "radio.data_rates.bandwidth_hz",
                    reason: format!("must be positive, got {}", dr.bandwidth_hz),
                });
            }
        }
        if !(1..=4).contains(&self.coding_rate_index) {
            return Err(Error::InvalidField {
                field: "radio.coding_rate_index",
                reason: format!("must be in 1..=4, got {}", self.coding_rate_index),
            });
        }
        if self.preamble_symbols == 0 {
            return Err(Error::InvalidField {
                field: "radio.preamble_symbols",
                reason: "must be positive".into(),
            });
        }
        if self.ack_phy_payload_bytes > MAX_PHY_PAYLOAD {
            return Err(Error::InvalidField {
                field: "radio.ack_phy_payload_bytes",
                reason: format!("exceeds {MAX_PHY_PAYLOAD}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_motes: u32,
    /// Main (uplink + ACK1) channels; the downlink channel comes on top.
    pub n_channels: u32,
    pub rates: RateDistribution,
    /// Retransmissions start uniformly in `[1, 1 + W]` seconds.
    pub retry_window_w: f64,
    pub retry_limit: u32,
    /// Delay from the end of a data frame to ACK1.
    pub t1: f64,
    pub frm_payload_bytes: u32,
    pub radio: RadioParams,
}

impl ScenarioConfig {
    /// ACK2 delay, always one second after ACK1.
    pub fn t2(&self) -> f64 {
        self.t1 + RX2_DELAY_AFTER_RX1
    }

    /// Mean wait before a retransmission, `1 + W/2`.
    pub fn t_wait_mean(&self) -> f64 {
        1.0 + self.retry_window_w / 2.0
    }

    pub fn n_rates(&self) -> usize {
        self.rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_motes == 0 {
            return Err(Error::InvalidField {
                field: "n_motes",
                reason: "must be at least 1".into(),
            });
        }
        if self.n_channels == 0 {
            return Err(Error::InvalidField {
                field: "n_channels",
                reason: "must be at least 1".into(),
            });
        }
        self.rates.validate()?;
        if !(self.retry_window_w > 0.0) || !self.retry_window_w.is_finite() {
            return Err(Error::NonPositiveWindow {
                field: "retry_window_w",
                value: self.retry_window_w,
            });
        }
        if !(self.t1 >= 0.0) || !self.t1.is_finite() {
            return Err(Error::InvalidField {
                field: "t1",
                reason: format!("must be a nonnegative number of seconds, got {}", self.t1),
            });
        }
        let phy = self.frm_payload_bytes as u64 + self.radio.data_overhead_bytes as u64;
        if phy > MAX_PHY_PAYLOAD as u64 {
            return Err(Error::InvalidField {
                field: "frm_payload_bytes",
                reason: format!("data PHY payload of {phy} bytes exceeds {MAX_PHY_PAYLOAD}"),
            });
        }
        self.radio.validate(self.rates.len())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config is always serializable")
    }

    /// Loads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        validate_scenario(Self::from_toml_str(&text)?)
    }

    /// Looks up a bundled preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(paper_preset()),
            other => Err(Error::UnknownPreset(other.to_owned())),
        }
    }
}

pub fn validate_scenario(config: ScenarioConfig) -> Result<ScenarioConfig> {
    config.validate()?;
    Ok(config)
}

/// 1000 motes, three main channels, six EU868 data rates with the urban
/// 1 km rate mix, W = 2 s, RL = 7, T1 = 1 s and 51-byte frame payloads.
pub fn paper_preset() -> ScenarioConfig {
    ScenarioConfig {
        n_motes: 1000,
        n_channels: 3,
        rates: RateDistribution::new(vec![0.28, 0.2, 0.14, 0.1, 0.08, 0.2]),
        retry_window_w: 2.0,
        retry_limit: 7,
        t1: 1.0,
        frm_payload_bytes: 51,
        radio: RadioParams::eu868(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_preset_is_valid() {
        let cfg = validate_scenario(paper_preset()).unwrap();
        let sum: f64 = cfg.rates.probabilities().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(cfg.frm_payload_bytes, 51);
        assert_eq!(cfg.retry_limit, 7);
        assert_eq!(cfg.n_motes, 1000);
        assert_eq!(cfg.n_channels, 3);
        assert_eq!(cfg.retry_window_w, 2.0);
        assert_eq!(
            cfg.rates.probabilities(),
            &[0.28, 0.2, 0.14, 0.1, 0.08, 0.2]
        );
        assert_eq!(cfg.t2() - cfg.t1, 1.0);
        assert_eq!(cfg.t_wait_mean(), 2.0);
    }

    #[test]
    fn single_rate_is_valid() {
        let mut cfg = paper_preset();
        cfg.rates = RateDistribution::new(vec![1.0]);
        cfg.radio.data_rates.truncate(1);
        assert!(validate_scenario(cfg).is_ok());
    }

    #[test]
    fn unnormalized_distribution_is_rejected() {
        let mut cfg = paper_preset();
        cfg.rates = RateDistribution::new(vec![0.5, 0.6]);
        cfg.radio.data_rates.truncate(2);
        match validate_scenario(cfg) {
            Err(Error::DistributionNotNormalized { field, sum }) => {
                assert_eq!(field, "rates");
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn normalization_tolerance_is_absolute_1e9() {
        let mut cfg = paper_preset();
        cfg.rates = RateDistribution::new(vec![0.5, 0.5 + 5e-10]);
        cfg.radio.data_rates.truncate(2);
        assert!(cfg.validate().is_ok());
        cfg.rates = RateDistribution::new(vec![0.5, 0.5 + 5e-9]);
        assert!(matches!(
            cfg.validate(),
            Err(Error::DistributionNotNormalized { .. })
        ));
    }

    #[test]
    fn empty_rates_are_rejected() {
        let mut cfg = paper_preset();
        cfg.rates = RateDistribution::new(vec![]);
        cfg.radio.data_rates.clear();
        assert!(matches!(
            cfg.validate(),
            Err(Error::EmptyRates { field: "rates" })
        ));
    }

    #[test]
    fn nonpositive_window_is_rejected() {
        for w in [0.0, -1.0, f64::NAN] {
            let mut cfg = paper_preset();
            cfg.retry_window_w = w;
            assert!(matches!(
                cfg.validate(),
                Err(Error::NonPositiveWindow {
                    field: "retry_window_w",
                    ..
                })
            ));
        }
    }

    #[test]
    fn other_field_errors_name_the_field() {
        let mut cfg = paper_preset();
        cfg.n_motes = 0;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidField {
                field: "n_motes",
                ..
            })
        ));

        let mut cfg = paper_preset();
        cfg.n_channels = 0;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidField {
                field: "n_channels",
                ..
            })
        ));

        let mut cfg = paper_preset();
        cfg.t1 = -0.5;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidField { field: "t1", .. })
        ));

        let mut cfg = paper_preset();
        cfg.radio.data_rates[2].spreading_factor = 13;
        assert!(matches!(
            cfg.validate(),
            Err(Error::SpreadingFactorOutOfRange(13))
        ));

        let mut cfg = paper_preset();
        cfg.radio.data_rates.pop();
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidField {
                field: "radio.data_rates",
                ..
            })
        ));

        let mut cfg = paper_preset();
        cfg.frm_payload_bytes = 250;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidField {
                field: "frm_payload_bytes",
                ..
            })
        ));

        let mut cfg = paper_preset();
        cfg.rates = RateDistribution::new(vec![1.2, -0.2, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            cfg.validate(),
            Err(Error::ProbabilityOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn bundled_scenario_file_matches_preset() {
        let text = include_str!("../scenarios/paper.toml");
        let cfg = validate_scenario(ScenarioConfig::from_toml_str(text).unwrap()).unwrap();
        assert_eq!(cfg, paper_preset());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = paper_preset();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(ScenarioConfig::preset("paper").unwrap(), paper_preset());
        assert!(matches!(
            ScenarioConfig::preset("nope"),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_scenario(paper_preset()).unwrap();
        let twice = validate_scenario(once.clone()).unwrap();
        assert_eq!(once, twice);
    }
}
