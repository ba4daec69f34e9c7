use std::fmt;

use serde::{Deserialize, Serialize};

use super::mask::ChannelMask;
use super::ops;
use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, json_fingerprint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressKind {
    Noise,
    LinearDrift,
    LogDrift,
    ZeroChannels,
    FailureAndScale,
    Compose,
}

impl StressKind {
    pub const SINGLE: [StressKind; 5] = [
        StressKind::Noise,
        StressKind::LinearDrift,
        StressKind::LogDrift,
        StressKind::ZeroChannels,
        StressKind::FailureAndScale,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StressKind::Noise => "noise",
            StressKind::LinearDrift => "linear_drift",
            StressKind::LogDrift => "log_drift",
            StressKind::ZeroChannels => "zero_channels",
            StressKind::FailureAndScale => "failure_and_scale",
            StressKind::Compose => "compose",
        }
    }

    pub fn uses_randomness(&self) -> bool {
        matches!(
            self,
            StressKind::Noise | StressKind::ZeroChannels | StressKind::FailureAndScale | StressKind::Compose
        )
    }
}

impl fmt::Display for StressKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Absolute, kind-specific parameters. Serialised without a tag; the
/// enclosing spec's `kind` selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StressParams {
    Noise {
        percent: f64,
        ref_std: Vec<f64>,
    },
    LinearDrift {
        k: f64,
        global_t: bool,
    },
    LogDrift {
        k0: f64,
        k1: f64,
        global_t: bool,
    },
    FailureAndScale {
        fraction: f64,
        scale: f64,
    },
    ZeroChannels {
        fraction: f64,
        /// Explicit channel list; when absent the mask is drawn from the seed.
        channels: Option<Vec<usize>>,
    },
    Compose {
        children: Vec<StressSpec>,
    },
}

impl StressParams {
    fn kind(&self) -> StressKind {
        match self {
            StressParams::Noise { .. } => StressKind::Noise,
            StressParams::LinearDrift { .. } => StressKind::LinearDrift,
            StressParams::LogDrift { .. } => StressKind::LogDrift,
            StressParams::FailureAndScale { .. } => StressKind::FailureAndScale,
            StressParams::ZeroChannels { .. } => StressKind::ZeroChannels,
            StressParams::Compose { .. } => StressKind::Compose,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SpecRecord {
    kind: StressKind,
    severity: f64,
    params: StressParams,
    seed: u64,
    calibration_id: Option<String>,
}

/// A seeded perturbation with absolute parameters.
///
/// Once frozen, `calibration_id` is the SHA-256 of the canonical JSON record
/// with `calibration_id: null`, and the parameters can no longer change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRecord")]
pub struct StressSpec {
    kind: StressKind,
    severity: f64,
    params: StressParams,
    seed: u64,
    calibration_id: Option<String>,
}

impl TryFrom<SpecRecord> for StressSpec {
    type Error = Error;

    fn try_from(r: SpecRecord) -> Result<Self> {
        let spec = StressSpec::new(r.kind, r.severity, r.params, r.seed)?;
        match r.calibration_id {
            None => Ok(spec),
            Some(id) => {
                let frozen = spec.freeze()?;
                if frozen.calibration_id.as_deref() != Some(id.as_str()) {
                    return Err(Error::FingerprintMismatch {
                        expected: id,
                        found: frozen.calibration_id.unwrap_or_default(),
                    });
                }
                Ok(frozen)
            }
        }
    }
}

impl StressSpec {
    pub fn new(kind: StressKind, severity: f64, params: StressParams, seed: u64) -> Result<Self> {
        if params.kind() != kind {
            return Err(Error::InvalidArgument(format!(
                "stress kind {kind} does not match {} parameters",
                params.kind()
            )));
        }
        if !(severity >= 0.0 && severity.is_finite()) {
            return Err(Error::InvalidArgument(format!("severity must be >= 0, got {severity}")));
        }
        match &params {
            StressParams::LogDrift { k1, .. } if *k1 <= 0.0 => {
                return Err(Error::InvalidArgument(format!("log drift requires k1 > 0, got {k1}")))
            }
            StressParams::FailureAndScale { fraction, scale } if !(0.0..=1.0).contains(fraction) || *scale <= 0.0 => {
                return Err(Error::InvalidArgument(format!(
                    "failure_and_scale needs fraction in [0,1] and scale > 0, got {fraction}, {scale}"
                )))
            }
            StressParams::ZeroChannels { fraction, .. } if !(0.0..=1.0).contains(fraction) => {
                return Err(Error::InvalidArgument(format!(
                    "zeroing fraction {fraction} outside [0,1]"
                )))
            }
            StressParams::Noise { percent, .. } if *percent < 0.0 => {
                return Err(Error::InvalidArgument(format!("noise percent {percent} is negative")))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            severity,
            params,
            seed,
            calibration_id: None,
        })
    }

    pub fn kind(&self) -> StressKind {
        self.kind
    }

    pub fn severity(&self) -> f64 {
        self.severity
    }

    pub fn params(&self) -> &StressParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn calibration_id(&self) -> Option<&str> {
        self.calibration_id.as_deref()
    }

    pub fn is_frozen(&self) -> bool {
        self.calibration_id.is_some()
    }

    /// Content hash of the record with `calibration_id` cleared.
    pub fn content_hash(&self) -> Result<String> {
        json_fingerprint(&SpecRecord {
            kind: self.kind,
            severity: self.severity,
            params: self.params.clone(),
            seed: self.seed,
            calibration_id: None,
        })
    }

    /// Stamp the calibration id. Fails if already frozen.
    pub fn freeze(self) -> Result<Self> {
        if let Some(id) = &self.calibration_id {
            return Err(Error::Frozen(id.clone()));
        }
        let id = self.content_hash()?;
        Ok(Self {
            calibration_id: Some(id),
            ..self
        })
    }

    /// Replace the parameters of an unfrozen spec.
    pub fn set_params(&mut self, params: StressParams) -> Result<()> {
        if let Some(id) = &self.calibration_id {
            return Err(Error::Frozen(id.clone()));
        }
        *self = Self::new(self.kind, self.severity, params, self.seed)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// The zeroing mask this spec uses on `d` channels, if any.
    pub fn mask(&self, d: usize) -> Result<Option<ChannelMask>> {
        match &self.params {
            StressParams::ZeroChannels { channels: Some(ch), .. } => {
                Ok(Some(ChannelMask::explicit(ch.iter().copied(), d)?))
            }
            StressParams::ZeroChannels {
                fraction,
                channels: None,
            } => Ok(Some(ChannelMask::random(self.seed, *fraction, d)?)),
            StressParams::FailureAndScale { fraction, .. } => Ok(Some(ChannelMask::random(self.seed, *fraction, d)?)),
            _ => Ok(None),
        }
    }

    pub fn apply(&self, batch: &WindowBatch) -> Result<WindowBatch> {
        match &self.params {
            StressParams::Noise { percent, ref_std } => ops::apply_noise(batch, *percent, ref_std, self.seed),
            StressParams::LinearDrift { k, global_t } => ops::apply_linear_drift(batch, *k, *global_t),
            StressParams::LogDrift { k0, k1, global_t } => ops::apply_log_drift(batch, *k0, *k1, *global_t),
            StressParams::ZeroChannels { .. } => {
                let mask = self.mask(batch.n_features())?.expect("zeroing spec has a mask");
                ops::apply_zero_channels(batch, &mask)
            }
            StressParams::FailureAndScale { fraction, scale } => {
                ops::apply_failure_and_scale(batch, *fraction, *scale, self.seed)
            }
            StressParams::Compose { children } => {
                let mut out = batch.clone();
                for child in children {
                    out = child.apply(&out)?;
                }
                Ok(out)
            }
        }
    }
}

/// Chain calibrated specs; the composite applies them left to right.
pub fn compose(specs: Vec<StressSpec>) -> Result<StressSpec> {
    if let Some(i) = specs.iter().position(|s| !s.is_frozen()) {
        return Err(Error::InvalidArgument(format!("compose child {i} is not calibrated")));
    }
    let random_seeds: Vec<u64> = specs
        .iter()
        .filter(|s| s.kind.uses_randomness())
        .map(|s| s.seed)
        .collect();
    let mut sorted = random_seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != random_seeds.len() {
        log::warn!("compose: randomised children share seeds; their draws will be correlated");
    }
    let severity = specs.iter().map(|s| s.severity).fold(0.0, f64::max);
    let seed = specs
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, s)| derive_seed(acc, s.seed, i as u64));
    StressSpec::new(
        StressKind::Compose,
        severity,
        StressParams::Compose { children: specs },
        seed,
    )?
    .freeze()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(k: f64) -> StressSpec {
        StressSpec::new(
            StressKind::LinearDrift,
            0.5,
            StressParams::LinearDrift { k, global_t: false },
            1,
        )
        .unwrap()
    }

    #[test]
    fn kind_must_match_params() {
        assert!(StressSpec::new(
            StressKind::Noise,
            0.0,
            StressParams::LinearDrift {
                k: 0.0,
                global_t: false
            },
            0
        )
        .is_err());
    }

    #[test]
    fn frozen_spec_rejects_changes() {
        let mut s = linear(0.1).freeze().unwrap();
        assert!(matches!(
            s.set_params(StressParams::LinearDrift {
                k: 0.2,
                global_t: false
            }),
            Err(Error::Frozen(_))
        ));
        assert!(s.clone().freeze().is_err());
        let mut open = linear(0.1);
        open.set_params(StressParams::LinearDrift {
            k: 0.2,
            global_t: false,
        })
        .unwrap();
    }

    #[test]
    fn json_round_trip_checks_hash() {
        let s = StressSpec::new(
            StressKind::ZeroChannels,
            1.0,
            StressParams::ZeroChannels {
                fraction: 0.1,
                channels: None,
            },
            5,
        )
        .unwrap()
        .freeze()
        .unwrap();
        let json = s.to_json().unwrap();
        assert!(json.starts_with(r#"{"kind":"zero_channels","severity":1.0,"params":"#));
        assert_eq!(StressSpec::from_json(&json).unwrap(), s);
        let tampered = json.replace("0.1", "0.2");
        assert!(StressSpec::from_json(&tampered).is_err());

        let fs = StressSpec::new(
            StressKind::FailureAndScale,
            1.0,
            StressParams::FailureAndScale {
                fraction: 0.1,
                scale: 1.5,
            },
            5,
        )
        .unwrap()
        .freeze()
        .unwrap();
        assert_eq!(StressSpec::from_json(&fs.to_json().unwrap()).unwrap(), fs);
    }

    #[test]
    fn compose_requires_frozen_children() {
        assert!(compose(vec![linear(0.1)]).is_err());
        let c = compose(vec![linear(0.1).freeze().unwrap(), linear(0.2).freeze().unwrap()]).unwrap();
        assert_eq!(c.kind(), StressKind::Compose);
        assert!(c.is_frozen());
        let back = StressSpec::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
