use serde::{Deserialize, Serialize};

use crate::data::{merge_intervals, Interval, Timestamp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Truth,
    Prediction,
}

/// Sorted, disjoint, maximal intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    events: Vec<Interval>,
    source: EventSource,
}

impl EventSet {
    pub fn new(events: Vec<Interval>, source: EventSource) -> Self {
        Self {
            events: merge_intervals(events),
            source,
        }
    }

    pub fn events(&self) -> &[Interval] {
        &self.events
    }

    pub fn source(&self) -> EventSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Maximal runs of `true` in a flag series aligned to `timestamps`.
pub fn extract_events(timestamps: &[Timestamp], flags: &[bool], source: EventSource) -> Result<EventSet> {
    if timestamps.len() != flags.len() {
        return Err(Error::InvalidArgument(format!(
            "{} timestamps but {} flags",
            timestamps.len(),
            flags.len()
        )));
    }
    let mut events = Vec::new();
    let mut open: Option<Timestamp> = None;
    for i in 0..flags.len() {
        match (flags[i], open) {
            (true, None) => open = Some(timestamps[i]),
            (false, Some(s)) => {
                events.push(Interval {
                    start: s,
                    end: timestamps[i - 1],
                });
                open = None;
            }
            _ => {}
        }
    }
    if let (Some(s), Some(&last)) = (open, timestamps.last()) {
        events.push(Interval { start: s, end: last });
    }
    Ok(EventSet::new(events, source))
}

/// Predicted segments from window decisions: each positive window covers its
/// full span, and overlapping spans merge.
pub fn window_segments(starts: &[Timestamp], ends: &[Timestamp], decisions: &[bool]) -> Result<EventSet> {
    if starts.len() != decisions.len() || ends.len() != decisions.len() {
        return Err(Error::InvalidArgument(
            "window spans and decisions differ in length".into(),
        ));
    }
    let spans = decisions
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(i, _)| Interval {
            start: starts[i],
            end: ends[i],
        })
        .collect();
    Ok(EventSet::new(spans, EventSource::Prediction))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStats {
    pub events_total: usize,
    pub events_detected: usize,
    pub event_recall: f64,
    pub predicted_segments: usize,
    pub false_alarm_segments: usize,
    /// Fraction of predicted segments overlapping a true event.
    pub event_precision: f64,
    /// Latency per detected event, milliseconds, in truth order.
    pub latencies_ms: Vec<i64>,
    pub mean_latency_ms: Option<f64>,
    pub median_latency_ms: Option<f64>,
}

/// Score predicted segments against true events.
///
/// A true event is detected when some predicted segment overlaps it; with a
/// latency window the matching region extends to `start + latency_window`
/// if that lies past the event end. Each event counts once. Latency is the
/// first overlapping segment's start minus the event start, clamped at 0.
pub fn event_metrics(truth: &EventSet, pred: &EventSet, latency_window: Option<i64>) -> EventStats {
    let regions: Vec<Interval> = truth
        .events()
        .iter()
        .map(|e| Interval {
            start: e.start,
            end: latency_window.map_or(e.end, |lw| e.end.max(e.start + lw)),
        })
        .collect();
    let preds = pred.events();

    let mut latencies = Vec::new();
    for region in &regions {
        let first = preds.partition_point(|p| p.end < region.start);
        if let Some(p) = preds.get(first).filter(|p| p.start <= region.end) {
            latencies.push((p.start - region.start).max(0));
        }
    }
    let hits = preds.iter().filter(|p| regions.iter().any(|r| r.overlaps(p))).count();

    let events_total = regions.len();
    let events_detected = latencies.len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mean = (!latencies.is_empty()).then(|| latencies.iter().sum::<i64>() as f64 / latencies.len() as f64);
    let median = (!latencies.is_empty()).then(|| {
        let mut s = latencies.clone();
        s.sort_unstable();
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2] as f64
        } else {
            (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
        }
    });
    EventStats {
        events_total,
        events_detected,
        event_recall: ratio(events_detected, events_total),
        predicted_segments: preds.len(),
        false_alarm_segments: preds.len() - hits,
        event_precision: ratio(hits, preds.len()),
        latencies_ms: latencies,
        mean_latency_ms: mean,
        median_latency_ms: median,
    }
}
