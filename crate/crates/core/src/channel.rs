//! AWGN channel over the two-dimensional semantic space.
//!
//! A symbol `(x, y)` is treated as one complex sample with unit average
//! signal power, so the total noise power at `snr_db` is `10^(-snr_db/10)`,
//! split evenly across the two real dimensions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the semantic space.
pub type Symbol = [f64; 2];

/// SNR at or above which the channel is treated as noiseless.
pub const NOISELESS_SNR_DB: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub snr_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { snr_db: 5.0 }
    }
}

impl ChannelConfig {
    pub fn new(snr_db: f64) -> Self {
        Self { snr_db }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "snr_db must be finite, got {}",
                self.snr_db
            )))
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db >= NOISELESS_SNR_DB
    }

    /// Total noise power over both dimensions.
    pub fn noise_power(&self) -> f64 {
        if self.is_noiseless() {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }

    /// Standard deviation of each real noise component.
    pub fn sigma_per_dim(&self) -> f64 {
        (self.noise_power() / 2.0).sqrt()
    }

    /// Draws one noise vector.
    pub fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Symbol {
        if self.is_noiseless() {
            return [0.0, 0.0];
        }
        let s = self.sigma_per_dim();
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        [s * a, s * b]
    }

    pub fn transmit<R: Rng + ?Sized>(&self, x: Symbol, rng: &mut R) -> Symbol {
        let n = self.noise(rng);
        [x[0] + n[0], x[1] + n[1]]
    }
}

pub fn transmit<R: Rng + ?Sized>(x: Symbol, cfg: &ChannelConfig, rng: &mut R) -> Symbol {
    cfg.transmit(x, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn empirical_noise_power(snr_db: f64, x: Symbol, draws: usize, s: u64) -> (f64, [f64; 2]) {
        let cfg = ChannelConfig::new(snr_db);
        let mut rng = seed::rng(s);
        let mut power = 0.0;
        let mut mean = [0.0; 2];
        for _ in 0..draws {
            let y = cfg.transmit(x, &mut rng);
            let d = [y[0] - x[0], y[1] - x[1]];
            power += d[0] * d[0] + d[1] * d[1];
            mean[0] += d[0];
            mean[1] += d[1];
        }
        let n = draws as f64;
        (power / n, [mean[0] / n, mean[1] / n])
    }

    #[test]
    fn noiseless_limit_is_identity() {
        let cfg = ChannelConfig::new(250.0);
        let mut rng = seed::rng(1);
        assert_eq!(cfg.transmit([0.3, -1.2], &mut rng), [0.3, -1.2]);
        assert_eq!(ChannelConfig::new(200.0).noise_power(), 0.0);
    }

    #[test]
    fn noise_power_at_0_db() {
        let (p, _) = empirical_noise_power(0.0, [0.0, 0.0], 1_000_000, 2);
        assert!((p - 1.0).abs() < 0.005, "power {p}");
    }

    #[test]
    fn noise_power_at_5_db() {
        let (p, _) = empirical_noise_power(5.0, [1.0, 0.0], 1_000_000, 3);
        let expected = 10f64.powf(-0.5);
        assert!(((p - expected) / expected).abs() < 0.005, "power {p}");
    }

    #[test]
    fn noise_is_zero_mean_and_independent_of_symbol() {
        let draws = 200_000;
        let sigma = ChannelConfig::new(0.0).sigma_per_dim();
        let bound = 3.0 * sigma / (draws as f64).sqrt();
        for (i, x) in [[0.0, 0.0], [1.0, -1.0], [-3.0, 10.0]]
            .into_iter()
            .enumerate()
        {
            let (p, m) = empirical_noise_power(0.0, x, draws, 10 + i as u64);
            assert!(m[0].abs() < bound && m[1].abs() < bound, "mean {m:?}");
            assert!((p - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let cfg = ChannelConfig::new(5.0);
        let a: Vec<Symbol> = {
            let mut r = seed::rng(9);
            (0..10).map(|_| cfg.noise(&mut r)).collect()
        };
        let b: Vec<Symbol> = {
            let mut r = seed::rng(9);
            (0..10).map(|_| cfg.noise(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_snr_rejected() {
        assert!(ChannelConfig::new(f64::NAN).validate().is_err());
        assert!(ChannelConfig::new(f64::INFINITY).validate().is_err());
    }
}
