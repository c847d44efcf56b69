use serde::Serialize;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_half_width: f64,
}

impl Estimate {
    pub fn lower(&self) -> f64 {
        self.value - self.ci_half_width
    }

    pub fn upper(&self) -> f64 {
        self.value + self.ci_half_width
    }

    /// Whether the two confidence intervals share any point.
    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Counters from one run. Frames are counted when generated after warmup;
/// attempts when they started after warmup and finished before the end.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimStats {
    pub lambda: f64,
    pub frames_generated: u64,
    pub frames_superseded: u64,
    pub frames_delivered: u64,
    pub frames_dropped: u64,
    pub frames_in_flight: u64,
    pub attempts_total: u64,
    pub attempts_successful: u64,
    pub first_attempts_total: u64,
    pub first_attempts_successful: u64,
    pub ack1_cancelled: u64,
    pub events_processed: u64,
}

impl SimStats {
    /// generated = delivered + dropped + superseded + in flight.
    pub fn is_conserved(&self) -> bool {
        self.frames_generated
            == self.frames_delivered
                + self.frames_dropped
                + self.frames_superseded
                + self.frames_in_flight
    }

    /// Failed fraction over all attempts, with a binomial 95% interval.
    /// `None` when no attempt was counted.
    pub fn per(&self) -> Option<Estimate> {
        binomial_failure(self.attempts_total, self.attempts_successful)
    }

    /// Failed fraction over first attempts only.
    pub fn per1(&self) -> Option<Estimate> {
        binomial_failure(self.first_attempts_total, self.first_attempts_successful)
    }

    pub fn retry_attempts(&self) -> u64 {
        self.attempts_total - self.first_attempts_total
    }
}

fn binomial_failure(total: u64, successes: u64) -> Option<Estimate> {
    (total > 0).then(|| {
        let n = total as f64;
        let p = (total - successes) as f64 / n;
        Estimate {
            value: p,
            ci_half_width: Z_95 * (p * (1.0 - p) / n).sqrt(),
        }
    })
}

/// Mean with a 95% normal-approximation interval from the sample variance.
pub fn mean_ci(values: &[f64]) -> Result<Estimate> {
    if values.len() < 2 {
        return Err(Error::InsufficientReplications {
            required: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Estimate {
        value: mean,
        ci_half_width: Z_95 * (var / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerSummary {
    pub per: Estimate,
    pub per1: Estimate,
    pub replications: usize,
}

/// Averages per-attempt and first-attempt PER over replications. Runs with
/// no counted attempts are left out.
pub fn estimate_per(runs: &[SimStats]) -> Result<PerSummary> {
    let per: Vec<f64> = runs
        .iter()
        .filter_map(|s| s.per())
        .map(|e| e.value)
        .collect();
    let per1: Vec<f64> = runs
        .iter()
        .filter_map(|s| s.per1())
        .map(|e| e.value)
        .collect();
    Ok(PerSummary {
        per: mean_ci(&per)?,
        per1: mean_ci(&per1)?,
        replications: runs.len(),
    })
}
