//! Synthetic ship-power-like dataset generator.
//!
//! Reproduces the awkward statistical shape of real shaft-power telemetry:
//! a dense operating cluster (the modal half-knot speed bin holds well over
//! 9% of the data), a sparse low-speed tail (every half-knot bin below 16
//! knots holds under 0.8%), a cubic speed-power backbone modulated by wind,
//! draught and trim, noise whose scale grows with speed, and a small
//! idiosyncratic subpopulation mimicking propeller-pitch events.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

use super::{clean, Record, SystemStatus};

/// Three-component speed distribution: dense service cluster, broad
/// operational band, sparse low-speed tail. Weights must sum to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedMixture {
    pub dense_weight: f64,
    pub dense_mean: f64,
    pub dense_std: f64,
    pub band_weight: f64,
    pub band_mean: f64,
    pub band_std: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub tail_weight: f64,
    pub tail_lo: f64,
    pub tail_hi: f64,
}

impl Default for SpeedMixture {
    fn default() -> Self {
        SpeedMixture {
            dense_weight: 0.12,
            dense_mean: 18.75,
            dense_std: 0.12,
            band_weight: 0.78,
            band_mean: 19.0,
            band_std: 1.6,
            band_lo: 16.0,
            band_hi: 22.0,
            tail_weight: 0.10,
            tail_lo: 6.0,
            tail_hi: 16.0,
        }
    }
}

/// Generator parameters. Noise is additive with standard deviation
/// `noise_scale` times the local cubic power, so variance grows steeply
/// with speed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_points: usize,
    pub cubic_coefficient: f64,
    pub speed_mixture: SpeedMixture,
    pub noise_scale: f64,
    /// Fraction of records receiving extra propeller-pitch-style noise.
    pub idio_fraction: f64,
    /// Scale multiplier for the idiosyncratic subpopulation.
    pub idio_multiplier: f64,
    pub wind_coefficient: f64,
    pub draught_coefficient: f64,
    pub trim_coefficient: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_points: 20_000,
            cubic_coefficient: 1.0,
            speed_mixture: SpeedMixture::default(),
            noise_scale: 0.02,
            idio_fraction: 0.04,
            idio_multiplier: 7.0,
            wind_coefficient: 0.14,
            draught_coefficient: 0.14,
            trim_coefficient: 0.06,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::config("n_points must be positive"));
        }
        let m = &self.speed_mixture;
        let weight_sum = m.dense_weight + m.band_weight + m.tail_weight;
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "speed mixture weights must sum to 1, got {weight_sum}"
            )));
        }
        if m.dense_weight < 0.0 || m.band_weight < 0.0 || m.tail_weight < 0.0 {
            return Err(Error::config("mixture weights must be nonnegative"));
        }
        if !(m.band_lo < m.band_hi) || !(m.tail_lo < m.tail_hi) {
            return Err(Error::config("mixture component bounds must be ordered"));
        }
        if self.noise_scale < 0.0 || self.idio_fraction < 0.0 || self.idio_multiplier < 0.0 {
            return Err(Error::config("noise parameters must be nonnegative"));
        }
        if self.cubic_coefficient <= 0.0 {
            return Err(Error::config("cubic coefficient must be positive"));
        }
        Ok(())
    }
}

fn sample_speed(m: &SpeedMixture, rng: &mut impl Rng) -> f64 {
    let pick: f64 = rng.random();
    if pick < m.dense_weight {
        let dist = Normal::new(m.dense_mean, m.dense_std).expect("valid normal");
        dist.sample(rng).clamp(0.1, 35.0)
    } else if pick < m.dense_weight + m.band_weight {
        let dist = Normal::new(m.band_mean, m.band_std).expect("valid normal");
        for _ in 0..1000 {
            let v = dist.sample(rng);
            if v >= m.band_lo && v < m.band_hi {
                return v;
            }
        }
        m.band_mean.clamp(m.band_lo, m.band_hi)
    } else {
        rng.random_range(m.tail_lo..m.tail_hi)
    }
}

/// Generates, cleans and power-normalizes a synthetic record set.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<Record>> {
    config.validate()?;
    let mut rng = seeds::rng(config.seed, &[0x5e7]);
    let wind_dist: Normal<f64> = Normal::new(7.0, 3.0).expect("valid normal");
    let draught_dist: Normal<f64> = Normal::new(11.0, 0.8).expect("valid normal");
    let trim_dist: Normal<f64> = Normal::new(0.5, 0.5).expect("valid normal");
    let unit_normal: Normal<f64> = Normal::new(0.0, 1.0).expect("valid normal");

    let mut records = Vec::with_capacity(config.n_points);
    let mut powers = Vec::with_capacity(config.n_points);
    for _ in 0..config.n_points {
        let speed = sample_speed(&config.speed_mixture, &mut rng);
        let wind_speed = wind_dist.sample(&mut rng).abs().clamp(0.0, 25.0);
        let wind_dir: f64 = rng.random_range(0.0..360.0);
        let draught = draught_dist.sample(&mut rng).clamp(9.0, 13.0);
        let trim = trim_dist.sample(&mut rng).clamp(-2.0, 2.0);

        let cubic = config.cubic_coefficient * speed.powi(3);
        let modulation = 1.0
            + config.wind_coefficient * (wind_speed / 10.0) * wind_dir.to_radians().cos()
            + config.draught_coefficient * (draught - 11.0) / 2.0
            + config.trim_coefficient * trim / 2.0;
        let mut power = cubic * modulation;

        // Heteroscedastic noise: sd proportional to the local cubic power.
        let sigma = config.noise_scale * cubic;
        power += sigma * unit_normal.sample(&mut rng);
        if rng.random::<f64>() < config.idio_fraction {
            power += config.idio_multiplier * sigma * unit_normal.sample(&mut rng);
        }

        powers.push(power);
        records.push(Record {
            speed_through_water: speed,
            relative_wind_speed: wind_speed,
            relative_wind_direction: wind_dir,
            draught,
            trim,
            shaft_power: 0.0,
            system_status: SystemStatus::Off,
        });
    }

    let max_power = powers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_power > 0.0) {
        return Err(Error::data("generated powers are not positive"));
    }
    for (record, power) in records.iter_mut().zip(&powers) {
        record.shaft_power = power / max_power;
    }
    clean(&records)
}
