use serde::{Deserialize, Serialize};

use super::confusion::{accuracy, confusion, f1, precision, recall, ConfusionCounts};
use super::events::{event_metrics, window_segments, EventSet, EventStats};
use super::nab::{nab_tolerance_score, NabMode, NabStats};
use crate::data::{Timestamp, WindowBatch};
use crate::error::Result;
use crate::stress::StressSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub counts: ConfusionCounts,
    /// F1 was `0/0` (no positives in labels or decisions).
    pub f1_degenerate: bool,
}

impl WindowMetrics {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let f = f1(&counts);
        Self {
            f1: f.value,
            precision: precision(&counts).value,
            recall: recall(&counts).value,
            accuracy: accuracy(&counts).value,
            counts,
            f1_degenerate: f.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub detector_fingerprint: String,
    pub stress: Option<StressSpec>,
    #[serde(with = "crate::float_serde")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub window: WindowMetrics,
    pub event: EventStats,
    pub nab: Option<NabStats>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluatorOptions {
    pub latency_window_ms: Option<i64>,
    pub nab_tolerance_ms: Option<i64>,
    pub nab_mode: NabMode,
    /// Explicit changepoints; defaults to the start of each true event.
    pub changepoints: Option<Vec<Timestamp>>,
}

/// Turns window decisions into a [`MetricsReport`] against fixed truth.
#[derive(Debug, Clone)]
pub struct Evaluator {
    truth: EventSet,
    options: EvaluatorOptions,
}

impl Evaluator {
    pub fn new(truth: EventSet, options: EvaluatorOptions) -> Self {
        Self { truth, options }
    }

    pub fn truth(&self) -> &EventSet {
        &self.truth
    }

    pub fn options(&self) -> &EvaluatorOptions {
        &self.options
    }

    pub fn window_metrics(&self, batch: &WindowBatch, decisions: &[bool]) -> Result<WindowMetrics> {
        Ok(WindowMetrics::from_counts(confusion(batch.labels(), decisions)?))
    }

    pub fn evaluate(&self, batch: &WindowBatch, decisions: &[bool], provenance: Provenance) -> Result<MetricsReport> {
        let window = self.window_metrics(batch, decisions)?;
        let pred = window_segments(batch.window_starts(), batch.window_ends(), decisions)?;
        let event = event_metrics(&self.truth, &pred, self.options.latency_window_ms);
        let nab = match self.options.nab_tolerance_ms {
            Some(tol) => {
                let cps: Vec<Timestamp> = match &self.options.changepoints {
                    Some(c) => c.clone(),
                    None => self.truth.events().iter().map(|e| e.start).collect(),
                };
                // A window's decision is available at its last timestamp.
                Some(nab_tolerance_score(
                    &cps,
                    batch.window_ends(),
                    decisions,
                    tol,
                    self.options.nab_mode,
                )?)
            }
            None => None,
        };
        Ok(MetricsReport {
            window,
            event,
            nab,
            provenance,
        })
    }
}
