//! Adapter for scores produced outside this crate.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aggregation, DetectorModel, ScoreGranularity, ScoreSeries};
use crate::data::{parse_timestamp, EpochUnit, Timestamp, WindowBatch};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    HigherAnomalous,
    LowerAnomalous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreManifest {
    pub orientation: Orientation,
    #[serde(default)]
    pub granularity: ScoreGranularity,
    /// Unit of integer timestamps in the score file.
    #[serde(default = "default_unit")]
    pub epoch_unit: EpochUnit,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn default_unit() -> EpochUnit {
    EpochUnit::Milliseconds
}

/// Stored scores keyed by timestamp, already oriented so that higher is
/// more anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub scores: BTreeMap<Timestamp, f64>,
    pub granularity: ScoreGranularity,
    pub aggregation: Aggregation,
    pub source_fingerprint: String,
}

pub fn read_score_manifest(path: &Path) -> Result<ScoreManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Read a `window_start,score` CSV. Lower-anomalous scores are negated.
pub fn load_external_scores(path: &Path, manifest: &ScoreManifest) -> Result<DetectorModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("score file lacks a `{name}` column")))
    };
    let (ts_col, score_col) = (col("window_start")?, col("score")?);
    let mut scores = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let raw_ts = rec.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(raw_ts, manifest.epoch_unit).ok_or_else(|| Error::MalformedRow {
            row,
            message: format!("bad timestamp `{raw_ts}`"),
        })?;
        let raw = rec.get(score_col).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("bad score `{raw}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::MalformedRow {
                row,
                message: "non-finite score".into(),
            });
        }
        let v = match manifest.orientation {
            Orientation::HigherAnomalous => v,
            Orientation::LowerAnomalous => -v,
        };
        if scores.insert(ts, v).is_some() {
            return Err(Error::DuplicateScore(raw_ts.to_string()));
        }
    }
    Ok(DetectorModel::ExternalScores(ExternalScores {
        scores,
        granularity: manifest.granularity,
        aggregation: manifest.aggregation,
        source_fingerprint: sha256_hex(&bytes),
    }))
}

impl ExternalScores {
    pub fn score(&self, batch: &WindowBatch) -> Result<ScoreSeries> {
        let mut out = Vec::with_capacity(batch.len());
        for (&start, &end) in batch.window_starts().iter().zip(batch.window_ends()) {
            let v = match self.granularity {
                ScoreGranularity::PerWindow => *self
                    .scores
                    .get(&start)
                    .ok_or_else(|| Error::MissingScore(start.to_string()))?,
                ScoreGranularity::PerTimestep => {
                    let vals: Vec<f64> = self.scores.range(start..=end).map(|(_, v)| *v).collect();
                    if vals.is_empty() {
                        return Err(Error::MissingScore(start.to_string()));
                    }
                    self.aggregation.reduce(&vals)
                }
            };
            out.push(v);
        }
        ScoreSeries::new(batch.window_starts().to_vec(), out, self.aggregation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("scores.csv");
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn manifest(orientation: Orientation) -> ScoreManifest {
        ScoreManifest {
            orientation,
            granularity: ScoreGranularity::PerWindow,
            epoch_unit: EpochUnit::Milliseconds,
            aggregation: Aggregation::MaxOverTime,
        }
    }

    fn windows(starts: &[i64]) -> WindowBatch {
        let n = starts.len();
        WindowBatch::from_parts(
            vec![0.0; n],
            1,
            1,
            1,
            starts.to_vec(),
            starts.to_vec(),
            (0..n).collect(),
            vec![false; n],
            vec!["x".into()],
        )
        .unwrap()
    }

    #[test]
    fn pass_through_and_shuffle() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "window_start,score\n0,0.5\n10,1.5\n20,-2\n");
        let m = load_external_scores(&p, &manifest(Orientation::HigherAnomalous)).unwrap();
        let s = m.score(&windows(&[0, 10, 20])).unwrap();
        assert_eq!(s.scores(), &[0.5, 1.5, -2.0]);

        let p = write(dir.path(), "window_start,score\n20,-2\n0,0.5\n10,1.5\n");
        let m2 = load_external_scores(&p, &manifest(Orientation::HigherAnomalous)).unwrap();
        assert_eq!(m2.score(&windows(&[0, 10, 20])).unwrap(), s);
    }

    #[test]
    fn missing_window_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "window_start,score\n0,0.5\n20,1\n");
        let m = load_external_scores(&p, &manifest(Orientation::HigherAnomalous)).unwrap();
        let err = m.score(&windows(&[0, 10, 20])).unwrap_err();
        assert!(matches!(err, Error::MissingScore(ref t) if t == "10"));
    }

    #[test]
    fn duplicates_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "window_start,score\n0,0.5\n0,1\n");
        assert!(matches!(
            load_external_scores(&p, &manifest(Orientation::HigherAnomalous)),
            Err(Error::DuplicateScore(_))
        ));
    }

    #[test]
    fn lower_anomalous_is_flipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "window_start,score\n0,0.5\n10,1.5\n");
        let m = load_external_scores(&p, &manifest(Orientation::LowerAnomalous)).unwrap();
        assert_eq!(m.score(&windows(&[0, 10])).unwrap().scores(), &[-0.5, -1.5]);
    }

    #[test]
    fn per_timestep_aggregates_the_span() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "window_start,score\n0,1\n1,5\n2,2\n3,0\n");
        let mut man = manifest(Orientation::HigherAnomalous);
        man.granularity = ScoreGranularity::PerTimestep;
        let m = load_external_scores(&p, &man).unwrap();
        let b = WindowBatch::from_parts(
            vec![0.0; 4],
            2,
            1,
            2,
            vec![0, 2],
            vec![1, 3],
            vec![0, 2],
            vec![false; 2],
            vec!["x".into()],
        )
        .unwrap();
        assert_eq!(m.score(&b).unwrap().scores(), &[5.0, 2.0]);
    }

    #[test]
    fn manifest_parses() {
        let m: ScoreManifest =
            serde_json::from_str(r#"{"orientation":"lower-anomalous","granularity":"per_timestep"}"#).unwrap();
        assert_eq!(m.orientation, Orientation::LowerAnomalous);
        assert_eq!(m.granularity, ScoreGranularity::PerTimestep);
    }
}
