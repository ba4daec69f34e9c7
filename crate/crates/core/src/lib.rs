//! Stress-calibrated, event-level robustness evaluation for multivariate
//! time-series anomaly detectors.
//!
//! The crate is organised along the evaluation pipeline:
//!
//! * [`data`]: CSV ingestion, imputation, resampling, gap segmentation,
//!   train-split normalisation and sliding windows.
//! * [`stress`]: seeded, severity-parameterised perturbations applied to
//!   model-input windows, calibrated offline and frozen before testing.
//! * [`detect`]: the detector contract, a linear autoencoder, a Gaussian
//!   density estimator, an external score adapter and threshold selection.
//! * [`metrics`]: window confusion metrics, event detection and latency,
//!   tolerance-window change-point scoring.
//! * [`probe`]: per-channel influence via zeroing, ranking, top-k sweeps and
//!   sensor vetting.
//! * [`synth`]: deterministic synthetic telemetry with scripted anomalies.
//! * [`runner`]: declarative experiment configs, sweeps and result files.

pub mod data;
pub mod detect;
pub mod error;
mod float_serde;
pub mod hashing;
pub mod metrics;
pub mod probe;
pub mod runner;
pub mod stress;
pub mod synth;

pub use error::{Error, Result};
