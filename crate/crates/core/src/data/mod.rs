//! Dataset ingestion and preprocessing.
//!
//! Timestamps are epoch milliseconds throughout; missing cells are `NaN`.

mod dataset;
mod impute;
mod ingest;
mod normalize;
mod resample;
mod segment;
mod window;

pub use dataset::{merge_intervals, Interval, Split, TimeSeriesDataset, Timestamp};
pub use impute::impute_forward_fill;
pub use ingest::{
    ingest_csv, ingest_reader, parse_timestamp, read_label_file, write_csv, write_label_file, EpochUnit,
    FeatureSelection, Imputation, IngestSchema, LabelSource, TimestampSource,
};
pub use normalize::{apply_normalizer, fit_normalizer, NormStats};
pub use resample::resample_uniform;
pub use segment::segment_by_gaps;
pub use window::{make_windows, WindowBatch};

/// Convert seconds (as written in configs) to milliseconds.
pub fn seconds_to_millis(seconds: f64) -> i64 {
    (seconds * 1000.0).round() as i64
}
