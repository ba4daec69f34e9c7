use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

/// Epoch milliseconds.
pub type Timestamp = i64;

/// Closed interval `[start, end]` over timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Interval {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidArgument(format!(
                "interval end {end} precedes start {start}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(Interval { start, end })
    }

    pub fn duration(&self) -> i64 {
        self.end - self.start
    }
}

/// Sort and merge overlapping or touching closed intervals.
pub fn merge_intervals(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.sort();
    let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => merged.push(iv),
        }
    }
    merged
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Timestamped `T x d` feature matrix with anomaly label intervals.
///
/// Immutable after construction; every transform returns a new dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    timestamps: Vec<Timestamp>,
    values: Vec<f64>,
    feature_names: Vec<String>,
    label_intervals: Vec<Interval>,
    split: Split,
    sampling_interval: Option<i64>,
}

impl TimeSeriesDataset {
    /// Build a dataset. `values` is row-major `T x d`. Label intervals are
    /// merged and clipped to the timestamp range; intervals entirely outside
    /// it are dropped.
    pub fn new(
        timestamps: Vec<Timestamp>,
        values: Vec<f64>,
        feature_names: Vec<String>,
        label_intervals: Vec<Interval>,
        split: Split,
        sampling_interval: Option<i64>,
    ) -> Result<Self> {
        let d = feature_names.len();
        if values.len() != timestamps.len() * d {
            return Err(Error::InvalidArgument(format!(
                "value matrix has {} cells, expected {} rows x {} features",
                values.len(),
                timestamps.len(),
                d
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::NonMonotoneTimestamps(i + 1));
        }
        let label_intervals = match (timestamps.first(), timestamps.last()) {
            (Some(&first), Some(&last)) => {
                let span = Interval {
                    start: first,
                    end: last,
                };
                merge_intervals(label_intervals)
                    .iter()
                    .filter_map(|iv| iv.intersect(&span))
                    .collect()
            }
            _ => Vec::new(),
        };
        Ok(Self {
            timestamps,
            values,
            feature_names,
            label_intervals,
            split,
            sampling_interval,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_intervals(&self) -> &[Interval] {
        &self.label_intervals
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn sampling_interval(&self) -> Option<i64> {
        self.sampling_interval
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.n_features();
        &self.values[r * d..(r + 1) * d]
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_features() + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|r| self.value(r, c)).collect()
    }

    /// Point labels: `true` where the timestamp lies inside a label interval.
    pub fn point_labels(&self) -> Vec<bool> {
        self.timestamps
            .iter()
            .map(|&t| self.label_intervals.iter().any(|iv| iv.contains(t)))
            .collect()
    }

    pub fn with_split(&self, split: Split) -> Self {
        Self { split, ..self.clone() }
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { values, ..self.clone() }
    }

    /// Rows `[start, end)` with label intervals clipped to the slice.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "row range {start}..{end} out of bounds for {} rows",
                self.len()
            )));
        }
        let d = self.n_features();
        Self::new(
            self.timestamps[start..end].to_vec(),
            self.values[start * d..end * d].to_vec(),
            self.feature_names.clone(),
            self.label_intervals.clone(),
            self.split,
            self.sampling_interval,
        )
    }

    /// Row-concatenate datasets sharing the same features, in order.
    pub fn concat(parts: &[TimeSeriesDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("no datasets to concatenate".into()))?;
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.feature_names != first.feature_names {
                return Err(Error::DimensionMismatch {
                    expected: first.n_features(),
                    got: p.n_features(),
                });
            }
            timestamps.extend_from_slice(&p.timestamps);
            values.extend_from_slice(&p.values);
            labels.extend_from_slice(&p.label_intervals);
        }
        Self::new(
            timestamps,
            values,
            first.feature_names.clone(),
            labels,
            first.split,
            first.sampling_interval,
        )
    }

    /// Content fingerprint over timestamps, values, feature names and labels.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(16 * self.values.len() + 8 * self.len());
        bytes.extend_from_slice(&(self.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.n_features() as u64).to_le_bytes());
        for name in &self.feature_names {
            bytes.extend_from_slice(name.as_bytes());
            bytes.push(0);
        }
        for t in &self.timestamps {
            bytes.extend_from_slice(&t.to_le_bytes());
        }
        for v in &self.values {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for iv in &self.label_intervals {
            bytes.extend_from_slice(&iv.start.to_le_bytes());
            bytes.extend_from_slice(&iv.end.to_le_bytes());
        }
        sha256_hex(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: i64, b: i64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn merge_joins_overlap_and_touching() {
        let merged = merge_intervals(vec![iv(10, 20), iv(0, 5), iv(5, 7), iv(15, 30), iv(40, 41)]);
        assert_eq!(merged, vec![iv(0, 7), iv(10, 30), iv(40, 41)]);
    }

    #[test]
    fn labels_are_clipped_to_range() {
        let ds = TimeSeriesDataset::new(
            vec![10, 20, 30],
            vec![1.0, 2.0, 3.0],
            vec!["a".into()],
            vec![iv(0, 15), iv(100, 200)],
            Split::Test,
            None,
        )
        .unwrap();
        assert_eq!(ds.label_intervals(), &[iv(10, 15)]);
        assert_eq!(ds.point_labels(), vec![true, false, false]);
    }

    #[test]
    fn rejects_shape_mismatch_and_decreasing_time() {
        assert!(TimeSeriesDataset::new(vec![1, 2], vec![1.0], vec!["a".into()], vec![], Split::Train, None).is_err());
        let err = TimeSeriesDataset::new(vec![2, 1], vec![1.0, 2.0], vec!["a".into()], vec![], Split::Train, None)
            .unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTimestamps(1)));
    }
}
