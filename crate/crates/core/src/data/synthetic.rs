//! Synthetic zero-inflated, long-tailed, multi-horizon activity data.
//!
//! Every user draws a latent engagement `z = exp(N(mu, sigma²))`. With
//! probability `zero_rate` the user is dormant and never returns; otherwise
//! each future day is active with probability `sigmoid(a·ln z + b)`. The
//! label for horizon `N_t` counts active days among the first `N_t` days,
//! so labels are non-decreasing in the horizon by construction and bounded
//! by `N_t`. Users with very high engagement pile up at that bound.
//!
//! Features describe a 7-day observation window preceding the labels:
//! per-day active minutes, recency/frequency/monetary stand-ins derived
//! from them, a channel that weakly tracks engagement, and pure-noise
//! distractors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::schema::{
    CategoricalFeature, Dataset, FeatureRow, FeatureSchema, NumericFeature, SequenceFeature,
};
use crate::error::{Error, Result};
use crate::nn::sigmoid;

const CHANNELS: [&str; 5] = ["organic", "referral", "ads", "preload", "other"];
const DEVICES: [&str; 3] = ["android", "ios", "web"];
const WEEKDAYS: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub horizons: Vec<u32>,
    /// Probability of the point mass at total future inactivity.
    pub zero_rate: f64,
    /// Optional per-horizon cap below `N_t`; `None` caps at `N_t` days.
    pub cap_per_horizon: Option<Vec<f64>>,
    pub seed: u64,
    pub latent_mean: f64,
    pub latent_std: f64,
    pub activity_slope: f64,
    pub activity_offset: f64,
    /// Observation window length in days.
    pub window_days: usize,
    /// Daily activity rate of dormant users inside the observation window.
    pub dormant_window_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 10_000,
            horizons: vec![30, 90, 180, 365],
            zero_rate: 0.3,
            cap_per_horizon: None,
            seed: 0,
            latent_mean: 0.0,
            latent_std: 1.5,
            activity_slope: 2.0,
            activity_offset: 0.0,
            window_days: 7,
            dormant_window_rate: 0.15,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.zero_rate) {
            return Err(Error::Config(format!(
                "zero_rate must lie in [0, 1), got {}",
                self.zero_rate
            )));
        }
        if self.horizons.is_empty() || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "horizons must be non-empty and strictly increasing, got {:?}",
                self.horizons
            )));
        }
        if self.horizons[0] == 0 {
            return Err(Error::Config("horizons must be positive".into()));
        }
        if let Some(caps) = &self.cap_per_horizon {
            if caps.len() != self.horizons.len() {
                return Err(Error::Config("one cap per horizon required".into()));
            }
            if caps.iter().any(|c| !(c.is_finite() && *c >= 0.0))
                || caps.windows(2).any(|w| w[0] > w[1])
            {
                return Err(Error::Config(
                    "caps must be finite, non-negative and non-decreasing".into(),
                ));
            }
        }
        if !(self.latent_std > 0.0 && self.latent_std.is_finite()) {
            return Err(Error::Config("latent_std must be positive".into()));
        }
        if self.window_days == 0 {
            return Err(Error::Config("window_days must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dormant_window_rate) {
            return Err(Error::Config(
                "dormant_window_rate must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Schema of the rows [`generate_synthetic`] emits.
    pub fn schema(&self) -> FeatureSchema {
        let vocab = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        FeatureSchema {
            categorical: vec![
                CategoricalFeature {
                    name: "channel".into(),
                    vocabulary: vocab(&CHANNELS),
                },
                CategoricalFeature {
                    name: "device".into(),
                    vocabulary: vocab(&DEVICES),
                },
                CategoricalFeature {
                    name: "register_weekday".into(),
                    vocabulary: vocab(&WEEKDAYS),
                },
            ],
            numeric: vec![
                NumericFeature {
                    name: "recency".into(),
                    bins: 8,
                },
                NumericFeature {
                    name: "frequency".into(),
                    bins: 8,
                },
                NumericFeature {
                    name: "monetary".into(),
                    bins: 10,
                },
                NumericFeature {
                    name: "noise".into(),
                    bins: 4,
                },
            ],
            sequence: vec![SequenceFeature {
                name: "active_minutes".into(),
                length: self.window_days,
                bins: 6,
            }],
            horizons: self.horizons.clone(),
        }
    }
}

/// Draws `n_users` rows; row `i` depends only on `(seed, i)`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let latent = Normal::new(config.latent_mean, config.latent_std)
        .map_err(|e| Error::Config(e.to_string()))?;
    let rows = (0..config.n_users)
        .map(|i| generate_row(config, &latent, i as u64))
        .collect();
    Ok(Dataset {
        schema: config.schema(),
        rows,
    })
}

fn generate_row(config: &SyntheticConfig, latent: &Normal<f64>, index: u64) -> FeatureRow {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);

    let log_z = latent.sample(&mut rng);
    let dormant = rng.gen_bool(config.zero_rate);
    let rate = sigmoid(config.activity_slope * log_z + config.activity_offset);

    // observation window
    let window_rate = if dormant {
        config.dormant_window_rate
    } else {
        rate
    };
    let minutes_law = LogNormal::new(2.5 + 0.5 * log_z, 0.6).expect("valid lognormal");
    let minutes: Vec<f64> = (0..config.window_days)
        .map(|_| {
            if rng.gen_bool(window_rate) {
                (minutes_law.sample(&mut rng) * 10.0).round() / 10.0
            } else {
                0.0
            }
        })
        .collect();
    let active_days = minutes.iter().filter(|&&m| m > 0.0).count();
    let recency = minutes
        .iter()
        .rev()
        .position(|&m| m > 0.0)
        .unwrap_or(config.window_days) as f64;
    let monetary = (minutes.iter().sum::<f64>() * 10.0).round() / 10.0;
    let noise = (rng.sample::<f64, _>(rand_distr::StandardNormal) * 1000.0).round() / 1000.0;

    // channel leans on engagement, device and weekday are pure noise
    let channel_score = log_z + rng.sample::<f64, _>(rand_distr::StandardNormal);
    let channel = if channel_score > 1.5 {
        0
    } else if channel_score > 0.5 {
        1
    } else if channel_score > -0.5 {
        2
    } else if channel_score > -1.5 {
        3
    } else {
        4
    };
    let device = rng.gen_range(0..DEVICES.len());
    let weekday = rng.gen_range(0..WEEKDAYS.len());

    // future activity: binomial increments between consecutive horizons
    let mut labels = Vec::with_capacity(config.horizons.len());
    let mut cumulative = 0u64;
    let mut previous = 0u32;
    for (t, &horizon) in config.horizons.iter().enumerate() {
        if !dormant {
            let span = u64::from(horizon - previous);
            cumulative += Binomial::new(span, rate)
                .expect("rate in [0, 1]")
                .sample(&mut rng);
        }
        previous = horizon;
        let mut label = cumulative as f64;
        if let Some(caps) = &config.cap_per_horizon {
            label = label.min(caps[t]);
        }
        labels.push(label);
    }

    FeatureRow {
        categorical: vec![
            CHANNELS[channel].to_string(),
            DEVICES[device].to_string(),
            WEEKDAYS[weekday].to_string(),
        ],
        numeric: vec![recency, active_days as f64, monetary, noise],
        sequences: vec![minutes],
        labels,
    }
}
