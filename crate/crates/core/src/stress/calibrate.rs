use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{StressKind, StressParams, StressSpec};
use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

fn default_dropout_max() -> f64 {
    0.10
}

/// Absolute parameter ranges reached at relative level 1. These are
/// per-dataset experiment settings and must be declared in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressMaxima {
    /// Noise std as a percentage of the reference feature std.
    pub noise_percent_max: f64,
    /// Excess of the end-of-window linear multiplier, `k (W - 1)`.
    pub linear_max: f64,
    /// Excess of the end-of-window log multiplier, `k0 ln(k1 W)`.
    pub log_max: f64,
    /// Uniform sampling range for `k1`; equal bounds fix it.
    pub log_k1_range: [f64; 2],
    /// Fraction of channels zeroed at level 1.
    #[serde(default = "default_dropout_max")]
    pub dropout_max: f64,
    /// Scale applied to surviving channels by `failure_and_scale` at level 1.
    pub scale_max: f64,
    /// Drift time index runs across windows instead of resetting per window.
    #[serde(default)]
    pub global_t: bool,
}

impl StressMaxima {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.log_k1_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!(
                "log_k1_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_max) {
            return Err(Error::Config(format!(
                "dropout_max {} outside [0, 1]",
                self.dropout_max
            )));
        }
        if self.scale_max <= 0.0 || self.noise_percent_max < 0.0 {
            return Err(Error::Config("scale_max must be > 0 and noise_percent_max >= 0".into()));
        }
        Ok(())
    }
}

/// Which split supplies the noise reference std.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReference {
    #[default]
    Validation,
    Train,
}

/// Population std per column, ignoring missing cells.
pub fn reference_std(ds: &TimeSeriesDataset) -> Vec<f64> {
    (0..ds.n_features())
        .map(|c| {
            let col: Vec<f64> = ds.column(c).into_iter().filter(|v| !v.is_nan()).collect();
            if col.is_empty() {
                return 0.0;
            }
            let n = col.len() as f64;
            let m = col.iter().sum::<f64>() / n;
            (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

const K1_STREAM: u64 = 0x6B31;

/// Map a relative level in `[0, 1]` to absolute parameters using reference
/// statistics, and freeze the result.
pub fn calibrate_severity(
    reference: &TimeSeriesDataset,
    kind: StressKind,
    level: f64,
    maxima: &StressMaxima,
    window_length: usize,
    seed: u64,
) -> Result<StressSpec> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("relative level {level} outside [0, 1]")));
    }
    if window_length == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    maxima.validate()?;
    let w = window_length as f64;
    let params = match kind {
        StressKind::Noise => StressParams::Noise {
            percent: level * maxima.noise_percent_max,
            ref_std: reference_std(reference),
        },
        StressKind::LinearDrift => StressParams::LinearDrift {
            k: if window_length > 1 {
                level * maxima.linear_max / (w - 1.0)
            } else {
                0.0
            },
            global_t: maxima.global_t,
        },
        StressKind::LogDrift => {
            let [lo, hi] = maxima.log_k1_range;
            let k1 = if hi > lo {
                ChaCha8Rng::seed_from_u64(derive_seed(seed, K1_STREAM, 0)).random_range(lo..hi)
            } else {
                lo
            };
            let end = (k1 * w).ln();
            if end.abs() < 1e-12 && level > 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "k1 = {k1} gives ln(k1 W) = 0; the log drift cannot reach the requested level"
                )));
            }
            StressParams::LogDrift {
                k0: if level > 0.0 { level * maxima.log_max / end } else { 0.0 },
                k1,
                global_t: maxima.global_t,
            }
        }
        StressKind::ZeroChannels => StressParams::ZeroChannels {
            fraction: level * maxima.dropout_max,
            channels: None,
        },
        StressKind::FailureAndScale => StressParams::FailureAndScale {
            fraction: level * maxima.dropout_max,
            scale: 1.0 + level * (maxima.scale_max - 1.0),
        },
        StressKind::Compose => {
            return Err(Error::InvalidArgument(
                "compositions are built from calibrated children with compose()".into(),
            ))
        }
    };
    StressSpec::new(kind, level, params, seed)?.freeze()
}
