//! Detector contract and reference detectors.
//!
//! Scores follow one convention everywhere: higher means more anomalous.
//! A window is flagged when its score is strictly greater than the
//! threshold.

mod external;
mod gde;
mod mlprec;
mod threshold;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Timestamp, WindowBatch};
use crate::error::{Error, Result};
use crate::hashing::json_fingerprint;

pub use external::{load_external_scores, read_score_manifest, ExternalScores, Orientation, ScoreManifest};
pub use gde::{fit_gde, GdeConfig, GdeMode, GdeModel};
pub use mlprec::{fit_mlprec, MlprecConfig, MlprecModel};
pub use threshold::{
    calibrate_threshold, max_f1_threshold, quantile_threshold, select_threshold, ThresholdMethod, ThresholdPolicy,
    ThresholdSelection,
};

/// How per-timestep scores reduce to a window score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    MaxOverTime,
    MeanOverTime,
}

impl Aggregation {
    pub fn reduce(&self, values: &[f64]) -> f64 {
        match self {
            Aggregation::MaxOverTime => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregation::MeanOverTime => values.iter().sum::<f64>() / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreGranularity {
    #[default]
    PerWindow,
    PerTimestep,
}

/// Window scores plus an optional decision threshold that, once set, is
/// fixed for the lifetime of the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    window_starts: Vec<Timestamp>,
    scores: Vec<f64>,
    #[serde(with = "crate::float_serde::option")]
    threshold: Option<f64>,
    aggregation: Aggregation,
}

impl ScoreSeries {
    pub fn new(window_starts: Vec<Timestamp>, scores: Vec<f64>, aggregation: Aggregation) -> Result<Self> {
        if window_starts.len() != scores.len() {
            return Err(Error::InvalidArgument(
                "window starts and scores differ in length".into(),
            ));
        }
        Ok(Self {
            window_starts,
            scores,
            threshold: None,
            aggregation,
        })
    }

    pub fn window_starts(&self) -> &[Timestamp] {
        &self.window_starts
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        if let Some(t) = self.threshold {
            return Err(Error::FrozenStateMutated(format!(
                "threshold already fixed at {t}; refusing to change it to {threshold}"
            )));
        }
        self.threshold = Some(threshold);
        Ok(())
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.set_threshold(threshold)?;
        Ok(self)
    }

    pub fn decisions(&self) -> Result<Vec<bool>> {
        let t = self
            .threshold
            .ok_or_else(|| Error::InvalidArgument("score series has no threshold".into()))?;
        Ok(decide(&self.scores, t))
    }
}

/// `score > threshold` per window.
pub fn decide(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorModel {
    Mlprec(MlprecModel),
    Gde(GdeModel),
    ExternalScores(ExternalScores),
}

const MODEL_FORMAT: &str = "stressbench-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    dataset_fingerprint: String,
    model: DetectorModel,
}

impl DetectorModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DetectorModel::Mlprec(_) => "mlprec",
            DetectorModel::Gde(_) => "gde",
            DetectorModel::ExternalScores(_) => "external",
        }
    }

    /// Fingerprint of the training data (or score file) the model came from.
    pub fn fitted_on(&self) -> &str {
        match self {
            DetectorModel::Mlprec(m) => &m.fitted_on,
            DetectorModel::Gde(m) => &m.fitted_on,
            DetectorModel::ExternalScores(m) => &m.source_fingerprint,
        }
    }

    pub fn score(&self, batch: &WindowBatch) -> Result<ScoreSeries> {
        match self {
            DetectorModel::Mlprec(m) => m.score(batch),
            DetectorModel::Gde(m) => m.score(batch),
            DetectorModel::ExternalScores(m) => m.score(batch),
        }
    }

    /// Hash of every parameter; equal fingerprints mean identical models.
    pub fn fingerprint(&self) -> Result<String> {
        json_fingerprint(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dataset_fingerprint: self.fitted_on().to_string(),
            model: self.clone(),
        };
        let text = serde_json::to_string(&file)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Load a persisted model. When `expected_dataset` is given the stored
    /// dataset fingerprint must match it.
    pub fn load(path: &Path, expected_dataset: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        if let Some(expected) = expected_dataset {
            if expected != file.dataset_fingerprint {
                return Err(Error::FingerprintMismatch {
                    expected: expected.to_string(),
                    found: file.dataset_fingerprint,
                });
            }
        }
        Ok(file.model)
    }
}

pub(crate) fn check_shape(batch: &WindowBatch, n_features: usize, window_length: Option<usize>) -> Result<()> {
    if batch.n_features() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            got: batch.n_features(),
        });
    }
    if let Some(w) = window_length {
        if batch.window_length() != w {
            return Err(Error::InvalidArgument(format!(
                "model expects window length {w}, batch has {}",
                batch.window_length()
            )));
        }
    }
    Ok(())
}
