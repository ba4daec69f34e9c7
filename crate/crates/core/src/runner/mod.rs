//! Declarative experiment orchestration.
//!
//! Pipeline order is fixed: ingest, clean, segment, normalise, window, fit
//! on train, calibrate the threshold on validation, freeze, evaluate clean
//! test, evaluate each stress cell, then optional probing.

mod config;
mod output;
mod pipeline;

pub use config::{
    apply_overrides, config_hash, load_config, resolve, validate_config, validate_config_file, ComponentLevel,
    CompositionConfig, DataSource, DatasetConfig, DetectorConfig, Diagnostic, ExperimentConfig, LoadedConfig,
    MetricsConfig, Override, ProbingConfig, Severity, StressGrid, ValidationReport, ValidationSplit, WindowConfig,
};
pub use output::{format_mean_std, mean_std, read_results, summarize, ResultRow, SummaryRow, SIGNIFICANCE_BAND};
pub use pipeline::{
    fit_and_calibrate, fit_detector, output_root, prepare, run_experiment, CellResult, FrozenCalibration,
    FrozenManifest, Prepared, ProbeOutcome, RunOptions, SweepResult, OUTPUT_ROOT_ENV,
};
