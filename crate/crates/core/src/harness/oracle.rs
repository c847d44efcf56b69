//! Monte-Carlo evaluation of the repeat-collision probability straight from
//! its defining integral. Used to check the closed form in
//! [`crate::model::p_x_retry`].

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::rng_for;

pub const MIN_ORACLE_SAMPLES: u64 = 10_000;

/// `(r, t, w)` points spanning `r·t` from 1e-6 to 5, all with `2t ≤ w`.
pub const PX_CHECK_POINTS: [(f64, f64, f64); 10] = [
    (1e-6, 1.0, 2.0),
    (2e-5, 0.5, 2.0),
    (5e-4, 0.1, 2.0),
    (4e-3, 0.25, 3.0),
    (1e-2, 1.0, 2.5),
    (0.2, 0.5, 2.0),
    (0.5, 1.0, 2.0),
    (4.0, 0.25, 1.0),
    (2.0, 1.0, 2.0),
    (10.0, 0.5, 2.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Draws the first-collision offset `x` from `r e^{-r x}` truncated to
/// `[0, t]`, retry starts `y ~ U[τ, τ + w]` and `z ~ U[τ + x, τ + x + w]`,
/// and counts how often `[y, y + t]` and `[z, z + t]` intersect.
pub fn px_monte_carlo_oracle(
    r: f64,
    t: f64,
    w: f64,
    samples: u64,
    seed: u64,
) -> Result<OracleEstimate> {
    if samples < MIN_ORACLE_SAMPLES {
        return Err(Error::InvalidField {
            field: "samples",
            reason: format!("need at least {MIN_ORACLE_SAMPLES}, got {samples}"),
        });
    }
    if !(t > 0.0) || !(w > 0.0) || !(r >= 0.0) {
        return Err(Error::InvalidField {
            field: "px_monte_carlo_oracle",
            reason: format!("need t > 0, w > 0, r >= 0 (r = {r}, t = {t}, w = {w})"),
        });
    }
    let mut rng = rng_for(seed, 0);
    // 1 - e^{-r t}, kept accurate for tiny r t
    let mass = -(-r * t).exp_m1();
    let tau = t + 1.0;
    let mut hits = 0u64;
    for _ in 0..samples {
        let u: f64 = rng.random();
        let x = if mass > 0.0 {
            (-(-u * mass).ln_1p() / r).min(t)
        } else {
            u * t
        };
        let y = tau + rng.random::<f64>() * w;
        let z = tau + x + rng.random::<f64>() * w;
        if y <= z + t && z <= y + t {
            hits += 1;
        }
    }
    let n = samples as f64;
    let p = hits as f64 / n;
    Ok(OracleEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::p_x_retry;

    #[test]
    fn thin_packet_limit() {
        let (t, w) = (0.01, 2.0);
        let o = px_monte_carlo_oracle(1e-6, t, w, 1_000_000, 5).unwrap();
        assert!((o.estimate - 2.0 * t / w).abs() < 4.0 * o.std_error + 1e-4);
    }

    #[test]
    fn wide_window_vanishes() {
        let o = px_monte_carlo_oracle(0.1, 1.0, 1e6, 100_000, 5).unwrap();
        assert!(o.estimate < 1e-4);
    }

    /// Overlap integral for `2t <= w`: given the offset `x`, the start gap is
    /// triangular and the overlap probability is `1 - ((w - t)² + x²) / w²`,
    /// so only `E[x²]` of the truncated exponential is needed.
    fn overlap_integral(r: f64, t: f64, w: f64) -> f64 {
        let ex2 = 2.0 / (r * r) - (t * t + 2.0 * t / r) / (r * t).exp_m1();
        (2.0 * w * t - t * t - ex2) / (w * w)
    }

    #[test]
    fn agrees_with_exact_integral() {
        for (k, &(r, t, w)) in [(0.5, 1.0, 2.0), (2.0, 1.0, 2.0), (10.0, 0.5, 2.0)]
            .iter()
            .enumerate()
        {
            let o = px_monte_carlo_oracle(r, t, w, 1_000_000, 9 + k as u64).unwrap();
            let exact = overlap_integral(r, t, w);
            assert!(
                (o.estimate - exact).abs() < 4.0 * o.std_error,
                "{o:?} vs {exact}"
            );
        }
    }

    #[test]
    fn light_load_matches_closed_form() {
        let o = px_monte_carlo_oracle(1e-3, 1.0, 2.0, 1_000_000, 3).unwrap();
        let closed = p_x_retry(1e-3, 1.0, 2.0).unwrap();
        assert!(
            (o.estimate - closed).abs() < 4.0 * o.std_error,
            "{o:?} vs {closed}"
        );
    }

    #[test]
    fn std_error_scales_with_inverse_sqrt_samples() {
        let a = px_monte_carlo_oracle(0.5, 1.0, 2.0, 40_000, 1).unwrap();
        let b = px_monte_carlo_oracle(0.5, 1.0, 2.0, 640_000, 2).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((3.8..4.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn rejects_small_sample_counts() {
        assert!(px_monte_carlo_oracle(0.5, 1.0, 2.0, 100, 1).is_err());
    }

    #[test]
    fn check_points_cover_the_range() {
        let rt: Vec<f64> = PX_CHECK_POINTS.iter().map(|(r, t, _)| r * t).collect();
        assert!((rt[0] - 1e-6).abs() < 1e-18);
        assert!((rt[9] - 5.0).abs() < 1e-12);
        assert!(rt.iter().any(|&v| v < crate::model::PX_SMALL_ARGUMENT));
        assert!(PX_CHECK_POINTS.iter().all(|(_, t, w)| 2.0 * t <= *w));
    }
}
