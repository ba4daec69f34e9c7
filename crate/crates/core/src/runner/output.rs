//! Run-directory artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::LoadedConfig;
use super::pipeline::{CellResult, SweepResult};
use crate::error::{Error, Result};
use crate::float_serde::display;

/// F1 differences at or below this are annotated as not significant.
pub const SIGNIFICANCE_BAND: f64 = 0.02;

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub dataset: String,
    pub detector: String,
    pub stressor: String,
    pub severity: f64,
    pub seed: u64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub event_recall: f64,
    /// Seconds; empty when no event was detected.
    pub mean_latency: Option<f64>,
    pub threshold: String,
    pub accuracy: f64,
    pub event_precision: f64,
    pub events_detected: usize,
    pub events_total: usize,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub nab_detected: Option<usize>,
    pub nab_false_alarms: Option<usize>,
    pub calibration_id: String,
}

impl ResultRow {
    fn from_cell(result: &SweepResult, cell: &CellResult) -> Self {
        let r = &cell.report;
        Self {
            config_hash: result.config_hash.clone(),
            dataset: result.dataset.clone(),
            detector: result.detector.clone(),
            stressor: cell.stressor.clone(),
            severity: cell.severity,
            seed: cell.seed,
            f1: r.window.f1,
            precision: r.window.precision,
            recall: r.window.recall,
            event_recall: r.event.event_recall,
            mean_latency: r.event.mean_latency_ms.map(|ms| ms / 1000.0),
            threshold: display(r.provenance.threshold),
            accuracy: r.window.accuracy,
            event_precision: r.event.event_precision,
            events_detected: r.event.events_detected,
            events_total: r.event.events_total,
            tp: r.window.counts.tp,
            fp: r.window.counts.fp,
            tn: r.window.counts.tn,
            fn_: r.window.counts.fn_,
            nab_detected: r.nab.as_ref().map(|n| n.detected_within_tolerance),
            nab_false_alarms: r.nab.as_ref().map(|n| n.false_alarms),
            calibration_id: cell.calibration_id.clone().unwrap_or_default(),
        }
    }
}

/// Mean and spread of F1 over seeds for one `(stressor, severity)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config_hash: String,
    pub stressor: String,
    pub severity: f64,
    pub n: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_event_recall: f64,
    pub delta_f1: f64,
    pub note: String,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `0.711 (0.008)`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3} ({std:.3})")
}

/// Group rows by `(stressor, severity)` in first-appearance order. The
/// clean row is the reference for `delta_f1`.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let clean_f1 = rows.iter().find(|r| r.stressor == "clean").map(|r| r.f1);
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.stressor.clone(), r.severity.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let f1s: Vec<f64> = g.iter().map(|r| r.f1).collect();
            let (mean_f1, std_f1) = mean_std(&f1s);
            let (mean_event_recall, _) = mean_std(&g.iter().map(|r| r.event_recall).collect::<Vec<_>>());
            let delta_f1 = clean_f1.map_or(0.0, |c| mean_f1 - c);
            let note = if key.0 != "clean" && delta_f1.abs() <= SIGNIFICANCE_BAND {
                "not significant".to_string()
            } else {
                String::new()
            };
            SummaryRow {
                config_hash: g[0].config_hash.clone(),
                stressor: key.0,
                severity: f64::from_bits(key.1),
                n: g.len(),
                mean_f1,
                std_f1,
                mean_event_recall,
                delta_f1,
                note,
            }
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    write_bytes(path, &v)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct EffectiveConfig<'a> {
    config_hash: &'a str,
    source: String,
    overrides: &'a [super::config::Override],
    config: &'a super::config::ExperimentConfig,
}

pub(crate) fn write_config(dir: &Path, loaded: &LoadedConfig, config_hash: &str) -> Result<()> {
    write_json(
        &dir.join("config.json"),
        &EffectiveConfig {
            config_hash,
            source: loaded.path.display().to_string(),
            overrides: &loaded.overrides,
            config: &loaded.config,
        },
    )
}

#[derive(Serialize)]
struct CurveRow {
    severity: f64,
    mean_f1: f64,
    std_f1: f64,
    config_hash: String,
}

#[derive(Serialize)]
struct CompositionRow {
    config_hash: String,
    composition: String,
    n_masks: usize,
    mean_f1: f64,
    std_f1: f64,
    f1: String,
}

#[derive(Serialize)]
struct InfluenceRow<'a> {
    channel: usize,
    name: &'a str,
    metric_clean: f64,
    metric_zeroed: f64,
    delta: f64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct TopkRow<'a> {
    fraction: f64,
    disabled: usize,
    metric: f64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    name: &'a str,
    dataset: &'a str,
    detector: &'a str,
    created_at: String,
    stressbench_version: &'static str,
    overrides: &'a [super::config::Override],
    pipeline: &'a [String],
    threshold: &'a crate::detect::ThresholdSelection,
    threshold_objective: &'static str,
    importance_definition: Option<&'a str>,
    probing: Option<ProbingSummary<'a>>,
    cells: usize,
    files: Vec<String>,
}

#[derive(Serialize)]
struct ProbingSummary<'a> {
    metric: crate::probe::ProbeMetric,
    ranking: &'a [usize],
    vetted_channels: &'a [usize],
    clean_metric: f64,
    vetted_metric: f64,
}

/// Write every artifact except `config.json` and the frozen manifests,
/// which the pipeline writes at their points in the run.
pub(crate) fn write_run(dir: &Path, loaded: &LoadedConfig, result: &mut SweepResult) -> Result<()> {
    let hash = result.config_hash.clone();
    let mut files = vec![
        "config.json".to_string(),
        "frozen.json".into(),
        "frozen.post.json".into(),
    ];

    let rows: Vec<ResultRow> = result.rows().map(|c| ResultRow::from_cell(result, c)).collect();
    write_rows(&dir.join("results.csv"), &rows)?;
    files.push("results.csv".into());
    let summary = summarize(&rows);
    write_rows(&dir.join("summary.csv"), &summary)?;
    files.push("summary.csv".into());

    let clean_f1 = result.clean.report.window.f1;
    let curves = dir.join("curves");
    let kinds = &loaded.config.stress.kinds;
    if !kinds.is_empty() && !loaded.config.stress.severities.is_empty() {
        std::fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
    }
    for kind in kinds {
        let mut pts: Vec<&SummaryRow> = summary.iter().filter(|s| s.stressor == kind.as_str()).collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| a.severity.total_cmp(&b.severity));
        let mut out: Vec<CurveRow> = Vec::new();
        if pts[0].severity > 0.0 {
            out.push(CurveRow {
                severity: 0.0,
                mean_f1: clean_f1,
                std_f1: 0.0,
                config_hash: hash.clone(),
            });
        }
        out.extend(pts.iter().map(|s| CurveRow {
            severity: s.severity,
            mean_f1: s.mean_f1,
            std_f1: s.std_f1,
            config_hash: hash.clone(),
        }));
        let name = format!("{}_{}.csv", result.detector, kind.as_str());
        write_rows(&curves.join(&name), &out)?;
        files.push(format!("curves/{name}"));
    }

    if !loaded.config.stress.compositions.is_empty() {
        let comp_rows: Vec<CompositionRow> = loaded
            .config
            .stress
            .compositions
            .iter()
            .map(|c| {
                let f1s: Vec<f64> = result
                    .cells
                    .iter()
                    .filter(|r| r.composition && r.stressor == c.name)
                    .map(|r| r.report.window.f1)
                    .collect();
                let (mean_f1, std_f1) = mean_std(&f1s);
                CompositionRow {
                    config_hash: hash.clone(),
                    composition: c.name.clone(),
                    n_masks: f1s.len(),
                    mean_f1,
                    std_f1,
                    f1: format_mean_std(mean_f1, std_f1),
                }
            })
            .collect();
        write_rows(&dir.join("compositions.csv"), &comp_rows)?;
        files.push("compositions.csv".into());
    }

    if let Some(p) = &result.probing {
        let inf: Vec<InfluenceRow> = p
            .influences
            .iter()
            .map(|i| InfluenceRow {
                channel: i.channel,
                name: &i.name,
                metric_clean: i.metric_clean,
                metric_zeroed: i.metric_zeroed,
                delta: i.delta,
                config_hash: &hash,
            })
            .collect();
        write_rows(&dir.join("probing.csv"), &inf)?;
        let topk: Vec<TopkRow> = p
            .topk
            .iter()
            .map(|t| TopkRow {
                fraction: t.fraction,
                disabled: t.disabled,
                metric: t.metric,
                config_hash: &hash,
            })
            .collect();
        write_rows(&dir.join("topk.csv"), &topk)?;
        files.push("probing.csv".into());
        files.push("topk.csv".into());
    }

    files.push("manifest.json".into());
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            config_hash: &hash,
            name: &loaded.config.name,
            dataset: &result.dataset,
            detector: &result.detector,
            created_at: chrono::Utc::now().to_rfc3339(),
            stressbench_version: env!("CARGO_PKG_VERSION"),
            overrides: &loaded.overrides,
            pipeline: &result.steps,
            threshold: &result.threshold,
            threshold_objective: match result.threshold.method {
                crate::detect::ThresholdMethod::MaxF1 => "max window F1 on validation",
                crate::detect::ThresholdMethod::Quantile => "quantile of validation scores",
            },
            importance_definition: result.probing.as_ref().map(|p| p.ranking_source.as_str()),
            probing: result.probing.as_ref().map(|p| ProbingSummary {
                metric: p.metric,
                ranking: &p.ranking,
                vetted_channels: &p.vetted_channels,
                clean_metric: p.clean_metric,
                vetted_metric: p.vetted_metric,
            }),
            cells: result.cells.len(),
            files,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(stressor: &str, severity: f64, seed: u64, f1: f64) -> ResultRow {
        ResultRow {
            config_hash: "h".into(),
            dataset: "d".into(),
            detector: "gde".into(),
            stressor: stressor.into(),
            severity,
            seed,
            f1,
            precision: 0.0,
            recall: 0.0,
            event_recall: 0.0,
            mean_latency: None,
            threshold: "inf".into(),
            accuracy: 0.0,
            event_precision: 0.0,
            events_detected: 0,
            events_total: 0,
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
            nab_detected: None,
            nab_false_alarms: None,
            calibration_id: String::new(),
        }
    }

    #[test]
    fn summary_groups_and_annotates() {
        let rows = vec![
            row("clean", 0.0, 0, 0.80),
            row("noise", 0.5, 1, 0.79),
            row("noise", 0.5, 2, 0.81),
            row("noise", 1.0, 1, 0.50),
            row("noise", 1.0, 2, 0.60),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_eq!(s[1].n, 2);
        assert!((s[1].mean_f1 - 0.80).abs() < 1e-12);
        assert_eq!(s[1].note, "not significant");
        assert_eq!(s[2].note, "");
        assert!((s[2].std_f1 - (0.005f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mean_std_format() {
        assert_eq!(format_mean_std(0.7114, 0.0081), "0.711 (0.008)");
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    }

    #[test]
    fn results_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut r = row("noise", 0.25, 3, 0.5);
        r.mean_latency = Some(12.5);
        r.nab_detected = Some(2);
        write_rows(&p, &[r.clone(), row("clean", 0.0, 0, 0.7)]).unwrap();
        let back = read_results(&p).unwrap();
        assert_eq!(back[0], r);
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with(
            "config_hash,dataset,detector,stressor,severity,seed,f1,precision,recall,event_recall,mean_latency,threshold"
        ));
    }
}
