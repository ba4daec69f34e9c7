//! Deterministic synthetic telemetry with scripted anomalies.
//!
//! Each channel is a fixed linear mix of shared sinusoidal sources plus
//! Gaussian noise. Anomaly magnitudes are in units of the channel's
//! analytic standard deviation `sigma_c`.
//!
//! | anomaly        | mirrors stressor |
//! |----------------|------------------|
//! | `spike`        | noise            |
//! | `mean_shift`   | failure/scale    |
//! | `stuck_sensor` | zero channels    |
//! | `ramp_drift`   | linear drift     |

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{seconds_to_millis, write_csv, write_label_file, Interval, Split, TimeSeriesDataset, Timestamp};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

const SOURCE_STREAM: u64 = 0x5100;
const MIX_STREAM: u64 = 0x5101;
const TRAIN_NOISE_STREAM: u64 = 0x5102;
const TEST_NOISE_STREAM: u64 = 0x5103;
const DISRUPTION_STREAM: u64 = 0x5104;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    /// Period in samples.
    pub period: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Spike,
    MeanShift,
    StuckSensor,
    RampDrift,
}

/// A labelled event on the test segment. `start` is a row offset into the
/// test segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyScript {
    #[serde(rename = "type")]
    pub kind: AnomalyKind,
    pub channels: Vec<usize>,
    pub start: usize,
    pub duration: usize,
    #[serde(default)]
    pub magnitude: f64,
}

/// Unlabelled Gaussian noise burst on the test segment, `magnitude`
/// standard deviations wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disruption {
    pub channels: Vec<usize>,
    pub start: usize,
    pub duration: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub channels: usize,
    /// Test segment length.
    pub length: usize,
    /// Train segment length; defaults to `length`.
    #[serde(default)]
    pub train_length: Option<usize>,
    /// Explicit sources; drawn from the seed when absent.
    #[serde(default)]
    pub sources: Option<Vec<Sinusoid>>,
    #[serde(default = "default_n_sources")]
    pub n_sources: usize,
    /// `channels x sources` mixing matrix; drawn from the seed when absent.
    #[serde(default)]
    pub mixing: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
    #[serde(default = "default_interval")]
    pub sampling_interval_s: f64,
    /// Epoch milliseconds of the first train row.
    #[serde(default)]
    pub start: Timestamp,
    #[serde(default)]
    pub anomalies: Vec<AnomalyScript>,
    #[serde(default)]
    pub disruptions: Vec<Disruption>,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_sources() -> usize {
    3
}

fn default_noise_floor() -> f64 {
    0.1
}

fn default_interval() -> f64 {
    1.0
}

impl SynthConfig {
    pub fn new(channels: usize, length: usize, seed: u64) -> Self {
        Self {
            channels,
            length,
            train_length: None,
            sources: None,
            n_sources: default_n_sources(),
            mixing: None,
            noise_floor: default_noise_floor(),
            sampling_interval_s: default_interval(),
            start: 0,
            anomalies: Vec::new(),
            disruptions: Vec::new(),
            seed,
        }
    }

    pub fn train_length(&self) -> usize {
        self.train_length.unwrap_or(self.length)
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.length == 0 || self.train_length() == 0 {
            return Err(Error::Config(
                "synthetic data needs channels, length and train length >= 1".into(),
            ));
        }
        if !(self.sampling_interval_s > 0.0) || seconds_to_millis(self.sampling_interval_s) == 0 {
            return Err(Error::Config("sampling interval must be at least 1 ms".into()));
        }
        if !(self.noise_floor >= 0.0) {
            return Err(Error::Config("noise floor must be non-negative".into()));
        }
        if let Some(src) = &self.sources {
            if src.iter().any(|s| !(s.period > 0.0)) {
                return Err(Error::Config("sinusoid periods must be positive".into()));
            }
        }
        let k = self.source_count();
        if let Some(m) = &self.mixing {
            if m.len() != self.channels || m.iter().any(|r| r.len() != k) {
                return Err(Error::Config(format!("mixing matrix must be {} x {k}", self.channels)));
            }
        }
        let spans = self
            .anomalies
            .iter()
            .map(|a| (&a.channels, a.start, a.duration))
            .chain(self.disruptions.iter().map(|d| (&d.channels, d.start, d.duration)));
        for (channels, start, duration) in spans {
            if duration == 0 || start + duration > self.length {
                return Err(Error::Config(format!(
                    "script [{start}, {}) outside [0, {})",
                    start + duration,
                    self.length
                )));
            }
            if channels.is_empty() {
                return Err(Error::Config("script lists no channels".into()));
            }
            if let Some(&c) = channels.iter().find(|&&c| c >= self.channels) {
                return Err(Error::Config(format!("script channel {c} out of range")));
            }
        }
        for (i, a) in self.anomalies.iter().enumerate() {
            for b in &self.anomalies[i + 1..] {
                if a.start < b.start + b.duration && b.start < a.start + a.duration {
                    if let Some(&c) = a.channels.iter().find(|c| b.channels.contains(c)) {
                        return Err(Error::OverlappingScripts { channel: c });
                    }
                }
            }
        }
        Ok(())
    }

    fn source_count(&self) -> usize {
        self.sources.as_ref().map_or(self.n_sources, Vec::len)
    }

    fn resolved_sources(&self) -> Vec<Sinusoid> {
        if let Some(s) = &self.sources {
            return s.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, SOURCE_STREAM, 0));
        (0..self.n_sources)
            .map(|_| Sinusoid {
                period: rng.random_range(20.0..200.0),
                amplitude: 1.0,
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect()
    }

    fn resolved_mixing(&self) -> Vec<Vec<f64>> {
        if let Some(m) = &self.mixing {
            return m.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, MIX_STREAM, 0));
        let k = self.source_count();
        (0..self.channels)
            .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    /// Long-run standard deviation of each channel's normal regime,
    /// assuming distinct source periods.
    pub fn channel_sigma(&self) -> Vec<f64> {
        let src = self.resolved_sources();
        self.resolved_mixing()
            .iter()
            .map(|row| {
                let var: f64 = row.iter().zip(&src).map(|(m, s)| (m * s.amplitude).powi(2) / 2.0).sum();
                (var + self.noise_floor * self.noise_floor).sqrt()
            })
            .collect()
    }
}

fn normal_segment(
    config: &SynthConfig,
    sources: &[Sinusoid],
    mixing: &[Vec<f64>],
    offset: usize,
    rows: usize,
    noise_stream: u64,
) -> Vec<f64> {
    let d = config.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, noise_stream, 0));
    let mut out = Vec::with_capacity(rows * d);
    let mut base = vec![0.0; sources.len()];
    for r in 0..rows {
        let t = (offset + r) as f64;
        for (b, s) in base.iter_mut().zip(sources) {
            *b = s.amplitude * (2.0 * PI * t / s.period + s.phase).sin();
        }
        for row in mixing {
            let clean: f64 = row.iter().zip(&base).map(|(m, b)| m * b).sum();
            let noise: f64 = StandardNormal.sample(&mut rng);
            out.push(clean + config.noise_floor * noise);
        }
    }
    out
}

/// Generate `(train, test)`. The test segment continues the train segment
/// in time with identical generating parameters.
pub fn generate(config: &SynthConfig) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    config.validate()?;
    let d = config.channels;
    let (n_train, n_test) = (config.train_length(), config.length);
    let sources = config.resolved_sources();
    let mixing = config.resolved_mixing();
    let sigma = config.channel_sigma();
    let dt = seconds_to_millis(config.sampling_interval_s);
    let names: Vec<String> = (0..d).map(|c| format!("ch{c:02}")).collect();

    let train_values = normal_segment(config, &sources, &mixing, 0, n_train, TRAIN_NOISE_STREAM);
    let train_ts: Vec<Timestamp> = (0..n_train as i64).map(|i| config.start + i * dt).collect();
    let train = TimeSeriesDataset::new(train_ts, train_values, names.clone(), vec![], Split::Train, Some(dt))?;

    let mut values = normal_segment(config, &sources, &mixing, n_train, n_test, TEST_NOISE_STREAM);
    let test_ts: Vec<Timestamp> = (0..n_test as i64)
        .map(|i| config.start + (n_train as i64 + i) * dt)
        .collect();

    for (i, dis) in config.disruptions.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, DISRUPTION_STREAM, i as u64));
        for r in dis.start..dis.start + dis.duration {
            for &c in &dis.channels {
                let z: f64 = StandardNormal.sample(&mut rng);
                values[r * d + c] += dis.magnitude * sigma[c] * z;
            }
        }
    }

    let mut labels = Vec::with_capacity(config.anomalies.len());
    for a in &config.anomalies {
        for &c in &a.channels {
            let held = if a.start > 0 {
                values[(a.start - 1) * d + c]
            } else {
                train.values()[(n_train - 1) * d + c]
            };
            for (i, r) in (a.start..a.start + a.duration).enumerate() {
                let v = &mut values[r * d + c];
                match a.kind {
                    AnomalyKind::Spike | AnomalyKind::MeanShift => *v += a.magnitude * sigma[c],
                    AnomalyKind::StuckSensor => *v = held,
                    AnomalyKind::RampDrift => *v += a.magnitude * sigma[c] * (i + 1) as f64 / a.duration as f64,
                }
            }
        }
        labels.push(Interval::new(test_ts[a.start], test_ts[a.start + a.duration - 1])?);
    }
    let test = TimeSeriesDataset::new(test_ts, values, names, labels, Split::Test, Some(dt))?;
    Ok((train, test))
}

/// Write `train.csv`, `test.csv` and `test_labels.json` into `dir`.
pub fn write_synthetic(dir: &Path, train: &TimeSeriesDataset, test: &TimeSeriesDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join("train.csv"), train)?;
    write_csv(&dir.join("test.csv"), test)?;
    write_label_file(&dir.join("test_labels.json"), test.label_intervals())
}
