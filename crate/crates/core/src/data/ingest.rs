//! CSV ingestion driven by an [`IngestSchema`].

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::dataset::{merge_intervals, Interval, Split, TimeSeriesDataset, Timestamp};
use super::impute::impute_forward_fill;
use super::resample::resample_uniform;
use super::seconds_to_millis;
use crate::error::{Error, Result};

/// Where row timestamps come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampSource {
    Column(String),
    Index(usize),
    /// No timestamp column; rows are spaced `synthetic_interval_s` apart from epoch 0.
    SyntheticUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochUnit {
    #[default]
    Seconds,
    Milliseconds,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSelection {
    /// When set, only these columns (in this order) become features.
    #[serde(default)]
    pub include: Option<Vec<String>>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    #[default]
    None,
    /// Inline `{0,1}` column.
    Column(String),
    /// JSON array of `{"start": ts, "end": ts}`.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    #[default]
    ForwardFill,
    None,
}

fn default_timestamp() -> TimestampSource {
    TimestampSource::Column("timestamp".into())
}

fn default_synthetic_interval() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSchema {
    #[serde(default = "default_timestamp")]
    pub timestamp: TimestampSource,
    #[serde(default)]
    pub epoch_unit: EpochUnit,
    #[serde(default = "default_synthetic_interval")]
    pub synthetic_interval_s: f64,
    #[serde(default)]
    pub features: FeatureSelection,
    #[serde(default)]
    pub labels: LabelSource,
    /// Gap segmentation threshold; `None` disables segmentation.
    #[serde(default)]
    pub gap_threshold_s: Option<f64>,
    #[serde(default)]
    pub resample_interval_s: Option<f64>,
    #[serde(default)]
    pub imputation: Imputation,
    #[serde(default)]
    pub drop_empty_columns: bool,
    /// Accept equal consecutive timestamps (e.g. before resampling).
    #[serde(default)]
    pub allow_duplicate_timestamps: bool,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            timestamp: default_timestamp(),
            epoch_unit: EpochUnit::Seconds,
            synthetic_interval_s: 1.0,
            features: FeatureSelection::default(),
            labels: LabelSource::None,
            gap_threshold_s: None,
            resample_interval_s: None,
            imputation: Imputation::ForwardFill,
            drop_empty_columns: false,
            allow_duplicate_timestamps: false,
        }
    }
}

/// Parse an ISO-8601 / RFC 3339 string or an integer/float epoch value.
pub fn parse_timestamp(raw: &str, unit: EpochUnit) -> Option<Timestamp> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    let scale = match unit {
        EpochUnit::Seconds => 1000,
        EpochUnit::Milliseconds => 1,
    };
    if let Ok(i) = s.parse::<i64>() {
        return i.checked_mul(scale);
    }
    if let Ok(f) = s.parse::<f64>() {
        return f.is_finite().then(|| (f * scale as f64).round() as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%d/%m/%Y %H:%M:%S",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp_millis())
}

fn parse_cell(raw: &str) -> std::result::Result<f64, ()> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") || s == "null" {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| ())
}

fn parse_label(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "0.0" | "false" | "normal" => Some(false),
        "1" | "1.0" | "true" | "attack" | "anomaly" => Some(true),
        _ => None,
    }
}

#[derive(Deserialize)]
struct RawInterval {
    start: serde_json::Value,
    end: serde_json::Value,
}

fn json_timestamp(v: &serde_json::Value, unit: EpochUnit) -> Option<Timestamp> {
    match v {
        serde_json::Value::String(s) => parse_timestamp(s, unit),
        serde_json::Value::Number(n) => parse_timestamp(&n.to_string(), unit),
        _ => None,
    }
}

/// Read an external label file: JSON array of `{"start": ts, "end": ts}`.
pub fn read_label_file(path: &Path, unit: EpochUnit) -> Result<Vec<Interval>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: Vec<RawInterval> = serde_json::from_str(&text)?;
    let mut out = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let start = json_timestamp(&r.start, unit);
        let end = json_timestamp(&r.end, unit);
        match (start, end) {
            (Some(s), Some(e)) => out.push(Interval::new(s, e)?),
            _ => {
                return Err(Error::Schema(format!(
                    "label file {} entry {i}: unparseable timestamp",
                    path.display()
                )))
            }
        }
    }
    Ok(merge_intervals(out))
}

/// Write label intervals as a JSON array with integer epoch-millisecond bounds.
pub fn write_label_file(path: &Path, intervals: &[Interval]) -> Result<()> {
    let text = serde_json::to_string_pretty(intervals)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write a dataset as CSV with an epoch-millisecond `timestamp` column.
pub fn write_csv(path: &Path, ds: &TimeSeriesDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["timestamp".to_string()];
    header.extend(ds.feature_names().iter().cloned());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for r in 0..ds.len() {
        record.clear();
        record.push(ds.timestamps()[r].to_string());
        for v in ds.row(r) {
            record.push(if v.is_nan() { String::new() } else { v.to_string() });
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Ingest a CSV file. Applies column dropping, label attachment, imputation
/// and resampling as configured. Gap segmentation is left to the caller.
pub fn ingest_csv(path: &Path, schema: &IngestSchema, split: Split) -> Result<TimeSeriesDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema, split)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &IngestSchema, split: Split) -> Result<TimeSeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let ts_col = match &schema.timestamp {
        TimestampSource::Column(name) => {
            Some(find(name).ok_or_else(|| Error::Schema(format!("timestamp column `{name}` not in header")))?)
        }
        TimestampSource::Index(i) => {
            if *i >= headers.len() {
                return Err(Error::Schema(format!("timestamp index {i} out of range")));
            }
            Some(*i)
        }
        TimestampSource::SyntheticUniform => None,
    };
    let label_col = match &schema.labels {
        LabelSource::Column(name) => Some(find(name).ok_or_else(|| Error::MissingLabelColumn(name.clone()))?),
        _ => None,
    };

    let feature_cols: Vec<usize> = match &schema.features.include {
        Some(names) => names
            .iter()
            .map(|n| find(n).ok_or_else(|| Error::Schema(format!("feature column `{n}` not in header"))))
            .collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| Some(i) != ts_col && Some(i) != label_col)
            .filter(|&i| !schema.features.exclude.contains(&headers[i]))
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Schema("feature selection resolves to zero columns".into()));
    }

    let synthetic_step = seconds_to_millis(schema.synthetic_interval_s);
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut point_labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row: e.position().map(|p| p.line() as usize).unwrap_or(line),
            message: e.to_string(),
        })?;
        let ts = match ts_col {
            Some(c) => parse_timestamp(&rec[c], schema.epoch_unit).ok_or_else(|| Error::MalformedRow {
                row: line,
                message: format!("unparseable timestamp `{}`", &rec[c]),
            })?,
            None => i as i64 * synthetic_step,
        };
        if let Some(&prev) = timestamps.last() {
            if ts < prev || (ts == prev && !schema.allow_duplicate_timestamps) {
                return Err(Error::NonMonotoneTimestamps(i));
            }
        }
        timestamps.push(ts);
        for &c in &feature_cols {
            let v = parse_cell(&rec[c]).map_err(|_| Error::MalformedRow {
                row: line,
                message: format!("column `{}`: non-numeric value `{}`", headers[c], &rec[c]),
            })?;
            values.push(v);
        }
        if let Some(c) = label_col {
            point_labels.push(parse_label(&rec[c]).ok_or_else(|| Error::MalformedRow {
                row: line,
                message: format!("label `{}` is not 0/1", &rec[c]),
            })?);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Empty("csv has no data rows".into()));
    }

    let mut names: Vec<String> = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    if schema.drop_empty_columns {
        let d = names.len();
        let keep: Vec<usize> = (0..d)
            .filter(|&c| {
                let mut observed = values.chunks(d).map(|row| row[c]).filter(|v| !v.is_nan());
                match observed.next() {
                    None => false,
                    Some(first) => observed.any(|v| v != first),
                }
            })
            .collect();
        if keep.len() < d {
            let dropped: Vec<&str> = (0..d)
                .filter(|c| !keep.contains(c))
                .map(|c| names[c].as_str())
                .collect();
            log::info!(
                "dropping {} empty or constant column(s): {}",
                dropped.len(),
                dropped.join(", ")
            );
            if keep.is_empty() {
                return Err(Error::Schema("every feature column is empty or constant".into()));
            }
            values = values
                .chunks(d)
                .flat_map(|row| keep.iter().map(move |&c| row[c]))
                .collect();
            names = keep.iter().map(|&c| names[c].clone()).collect();
        }
    }

    let intervals = match &schema.labels {
        LabelSource::None => Vec::new(),
        LabelSource::Column(_) => intervals_from_points(&timestamps, &point_labels),
        LabelSource::File(path) => read_label_file(path, schema.epoch_unit)?,
    };

    let sampling = schema
        .resample_interval_s
        .map(seconds_to_millis)
        .or_else(|| (ts_col.is_none()).then_some(synthetic_step));
    let mut ds = TimeSeriesDataset::new(timestamps, values, names, intervals, split, sampling)?;
    if schema.imputation == Imputation::ForwardFill {
        ds = impute_forward_fill(&ds)?;
    }
    if let Some(step) = schema.resample_interval_s {
        ds = resample_uniform(&ds, seconds_to_millis(step))?;
    }
    Ok(ds)
}

/// Maximal runs of positive point labels as closed intervals.
pub(crate) fn intervals_from_points(timestamps: &[Timestamp], labels: &[bool]) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut open: Option<Timestamp> = None;
    for (i, (&t, &l)) in timestamps.iter().zip(labels).enumerate() {
        match (l, open) {
            (true, None) => open = Some(t),
            (false, Some(s)) => {
                out.push(Interval {
                    start: s,
                    end: timestamps[i - 1],
                });
                open = None;
            }
            _ => {}
        }
    }
    if let (Some(s), Some(&last)) = (open, timestamps.last()) {
        out.push(Interval { start: s, end: last });
    }
    merge_intervals(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_with_labels() -> IngestSchema {
        IngestSchema {
            labels: LabelSource::Column("label".into()),
            ..IngestSchema::default()
        }
    }

    #[test]
    fn three_rows_with_label_column() {
        let csv = "timestamp,a,b,label\n0,1,2,0\n1,1.5,2.5,0\n2,3,4,1\n";
        let ds = ingest_reader(csv.as_bytes(), &schema_with_labels(), Split::Test).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.label_intervals(), &[Interval { start: 2000, end: 2000 }]);
    }

    #[test]
    fn drops_empty_column() {
        let csv = "timestamp,a,empty,b\n0,1,,2\n1,2,,3\n2,3,,5\n";
        let mut schema = IngestSchema {
            drop_empty_columns: true,
            ..IngestSchema::default()
        };
        let ds = ingest_reader(csv.as_bytes(), &schema, Split::Train).unwrap();
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        schema.drop_empty_columns = false;
        schema.imputation = Imputation::None;
        let ds = ingest_reader(csv.as_bytes(), &schema, Split::Train).unwrap();
        assert_eq!(ds.n_features(), 3);
    }

    #[test]
    fn duplicate_timestamp_is_rejected() {
        let csv = "timestamp,a\n5,1\n5,2\n";
        let err = ingest_reader(csv.as_bytes(), &IngestSchema::default(), Split::Train).unwrap_err();
        assert_eq!(err.to_string(), "non-monotone timestamps at index 1");
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "timestamp,a\n0,1\n1,abc\n";
        match ingest_reader(csv.as_bytes(), &IngestSchema::default(), Split::Train).unwrap_err() {
            Error::MalformedRow { row, .. } => assert_eq!(row, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn ragged_row_is_malformed() {
        let csv = "timestamp,a,b\n0,1,2\n1,2\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &IngestSchema::default(), Split::Train),
            Err(Error::MalformedRow { row: 3, .. })
        ));
    }

    #[test]
    fn missing_label_column_is_an_error() {
        let csv = "timestamp,a\n0,1\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &schema_with_labels(), Split::Test),
            Err(Error::MissingLabelColumn(_))
        ));
    }

    #[test]
    fn iso_timestamps() {
        assert_eq!(
            parse_timestamp("1970-01-01T00:01:00Z", EpochUnit::Seconds),
            Some(60_000)
        );
        assert_eq!(
            parse_timestamp("1970-01-01 00:00:01.5", EpochUnit::Seconds),
            Some(1_500)
        );
        assert_eq!(parse_timestamp("12", EpochUnit::Milliseconds), Some(12));
        assert_eq!(parse_timestamp("nope", EpochUnit::Seconds), None);
    }

    #[test]
    fn external_label_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.json");
        std::fs::write(
            &path,
            r#"[{"start": 1, "end": 2}, {"start": "1970-01-01T00:00:02Z", "end": 3}]"#,
        )
        .unwrap();
        let ivs = read_label_file(&path, EpochUnit::Seconds).unwrap();
        assert_eq!(ivs, vec![Interval { start: 1000, end: 3000 }]);
    }

    #[test]
    fn synthetic_uniform_timestamps() {
        let csv = "a\n1\n2\n3\n";
        let schema = IngestSchema {
            timestamp: TimestampSource::SyntheticUniform,
            synthetic_interval_s: 2.0,
            ..IngestSchema::default()
        };
        let ds = ingest_reader(csv.as_bytes(), &schema, Split::Train).unwrap();
        assert_eq!(ds.timestamps(), &[0, 2000, 4000]);
    }
}
