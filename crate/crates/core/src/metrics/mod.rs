//! Window confusion metrics, event-level detection statistics and
//! tolerance-window change-point scoring.

mod confusion;
mod events;
mod nab;
mod report;

pub use confusion::{accuracy, confusion, f1, precision, recall, ConfusionCounts, Rate};
pub use events::{event_metrics, extract_events, window_segments, EventSet, EventSource, EventStats};
pub use nab::{nab_tolerance_score, NabMode, NabStats};
pub use report::{Evaluator, EvaluatorOptions, MetricsReport, Provenance, WindowMetrics};
