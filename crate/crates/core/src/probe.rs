//! Sensor-level probing by zeroing channels under a frozen detector.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{NormStats, WindowBatch};
use crate::detect::{decide, DetectorModel};
use crate::error::{Error, Result};
use crate::metrics::{Evaluator, Provenance};
use crate::stress::{ChannelMask, MaskOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMetric {
    #[default]
    WindowF1,
    WindowPrecision,
    WindowRecall,
    Accuracy,
    EventRecall,
    EventPrecision,
}

/// Where zeroing happens relative to normalisation. Post-normalisation
/// zeroing pins the channel at its training mean; pre-normalisation writes
/// a raw zero, i.e. `-mean / std` in normalised units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMode {
    #[default]
    PostNormalization,
    PreNormalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfluence {
    pub channel: usize,
    pub name: String,
    pub metric_clean: f64,
    pub metric_zeroed: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopkPoint {
    pub fraction: f64,
    pub disabled: usize,
    pub metric: f64,
}

/// Frozen model, test windows and threshold shared by every probe.
pub struct ProbeContext<'a> {
    model: &'a DetectorModel,
    batch: &'a WindowBatch,
    threshold: f64,
    evaluator: &'a Evaluator,
    metric: ProbeMetric,
    fill: Vec<f64>,
    evaluations: AtomicUsize,
}

impl<'a> ProbeContext<'a> {
    pub fn new(
        model: &'a DetectorModel,
        batch: &'a WindowBatch,
        threshold: f64,
        evaluator: &'a Evaluator,
        metric: ProbeMetric,
    ) -> Self {
        Self {
            model,
            batch,
            threshold,
            evaluator,
            metric,
            fill: vec![0.0; batch.n_features()],
            evaluations: AtomicUsize::new(0),
        }
    }

    /// Switch to pre-normalisation zeroing using the fitted statistics.
    pub fn with_zero_mode(mut self, mode: ZeroMode, stats: Option<&NormStats>) -> Result<Self> {
        self.fill = match (mode, stats) {
            (ZeroMode::PostNormalization, _) => vec![0.0; self.batch.n_features()],
            (ZeroMode::PreNormalization, Some(s)) => {
                if s.n_features() != self.batch.n_features() {
                    return Err(Error::DimensionMismatch {
                        expected: self.batch.n_features(),
                        got: s.n_features(),
                    });
                }
                s.mean
                    .iter()
                    .zip(&s.std)
                    .zip(&s.degenerate)
                    .map(|((m, sd), &deg)| if deg { -m } else { -m / sd })
                    .collect()
            }
            (ZeroMode::PreNormalization, None) => {
                return Err(Error::InvalidArgument(
                    "pre-normalisation zeroing needs normalisation statistics".into(),
                ))
            }
        };
        Ok(self)
    }

    pub fn n_channels(&self) -> usize {
        self.batch.n_features()
    }

    /// Number of metric evaluations performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Metric with `channels` zeroed jointly (empty = clean).
    pub fn evaluate(&self, channels: &[usize]) -> Result<f64> {
        let d = self.batch.n_features();
        if let Some(&bad) = channels.iter().find(|&&c| c >= d) {
            return Err(Error::InvalidArgument(format!(
                "channel {bad} out of range for {d} channels"
            )));
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let scores = if channels.is_empty() {
            self.model.score(self.batch)?
        } else {
            let mut data = self.batch.data().to_vec();
            for row in data.chunks_exact_mut(d) {
                for &c in channels {
                    row[c] = self.fill[c];
                }
            }
            self.model.score(&self.batch.with_data(data)?)?
        };
        let decisions = decide(scores.scores(), self.threshold);
        let report = self.evaluator.evaluate(
            self.batch,
            &decisions,
            Provenance {
                threshold: self.threshold,
                ..Default::default()
            },
        )?;
        Ok(match self.metric {
            ProbeMetric::WindowF1 => report.window.f1,
            ProbeMetric::WindowPrecision => report.window.precision,
            ProbeMetric::WindowRecall => report.window.recall,
            ProbeMetric::Accuracy => report.window.accuracy,
            ProbeMetric::EventRecall => report.event.event_recall,
            ProbeMetric::EventPrecision => report.event.event_precision,
        })
    }
}

/// One clean evaluation plus one per zeroed channel.
pub fn channel_influence(ctx: &ProbeContext) -> Result<Vec<ChannelInfluence>> {
    let clean = ctx.evaluate(&[])?;
    let names = ctx.batch.feature_names();
    (0..ctx.n_channels())
        .into_par_iter()
        .map(|c| {
            let zeroed = ctx.evaluate(&[c])?;
            Ok(ChannelInfluence {
                channel: c,
                name: names[c].clone(),
                metric_clean: clean,
                metric_zeroed: zeroed,
                delta: zeroed - clean,
            })
        })
        .collect()
}

/// Channels by descending `|delta|`, ties by index.
pub fn rank_importance(influences: &[ChannelInfluence]) -> Vec<usize> {
    let mut v: Vec<(usize, f64)> = influences.iter().map(|i| (i.channel, i.delta.abs())).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(c, _)| c).collect()
}

/// Channels disabled at `fraction`: `ceil(fraction * d)`, guarded against
/// float noise such as `0.05 * 40 = 2.0000000000000004`.
pub fn topk_count(fraction: f64, d: usize) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    ((fraction * d as f64 - 1e-9).ceil().max(0.0) as usize).min(d)
}

/// Zero the top-ranked channels jointly for each fraction. The ranking is
/// fixed for the whole sweep.
pub fn topk_disable_sweep(ctx: &ProbeContext, ranking: &[usize], fractions: &[f64]) -> Result<Vec<TopkPoint>> {
    let d = ctx.n_channels();
    if ranking.len() != d {
        return Err(Error::InvalidArgument(format!(
            "ranking has {} channels, expected {d}",
            ranking.len()
        )));
    }
    fractions
        .par_iter()
        .map(|&f| {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidArgument(format!("fraction {f} outside [0, 1]")));
            }
            let k = topk_count(f, d);
            Ok(TopkPoint {
                fraction: f,
                disabled: k,
                metric: ctx.evaluate(&ranking[..k])?,
            })
        })
        .collect()
}

/// Mask of channels whose zeroing raises the metric by more than `gain_threshold`.
pub fn vet_sensors(influences: &[ChannelInfluence], gain_threshold: f64) -> Result<ChannelMask> {
    ChannelMask::with_origin(
        influences
            .iter()
            .filter(|i| i.delta > gain_threshold)
            .map(|i| i.channel),
        influences.len(),
        MaskOrigin::ImportanceRanked,
    )
}

#[derive(Deserialize)]
struct ImportanceRow {
    channel: usize,
    importance: f64,
}

/// Ranking from an external `channel,importance` CSV, highest first.
pub fn read_importance_file(path: &Path, d: usize) -> Result<Vec<usize>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<ImportanceRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    rows.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.channel.cmp(&b.channel)));
    let ranking: Vec<usize> = rows.iter().map(|r| r.channel).collect();
    let mut seen = vec![false; d];
    for &c in &ranking {
        if c >= d || std::mem::replace(&mut seen[c], true) {
            return Err(Error::Schema(format!("importance file: bad or repeated channel {c}")));
        }
    }
    if ranking.len() != d {
        return Err(Error::Schema(format!(
            "importance file ranks {} of {d} channels",
            ranking.len()
        )));
    }
    Ok(ranking)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, Interval, Split, TimeSeriesDataset};
    use crate::detect::{fit_gde, GdeConfig};
    use crate::metrics::{EvaluatorOptions, EventSet, EventSource};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn influence(channel: usize, delta: f64) -> ChannelInfluence {
        ChannelInfluence {
            channel,
            name: channel.to_string(),
            metric_clean: 0.5,
            metric_zeroed: 0.5 + delta,
            delta,
        }
    }

    #[test]
    fn ranking() {
        let inf = vec![influence(0, 0.0), influence(1, -0.3), influence(2, 0.1)];
        assert_eq!(rank_importance(&inf), vec![1, 2, 0]);
        let mut rev = inf.clone();
        rev.reverse();
        assert_eq!(rank_importance(&rev), vec![1, 2, 0]);
        let eq = vec![influence(2, 0.1), influence(0, -0.1), influence(1, 0.1)];
        assert_eq!(rank_importance(&eq), vec![0, 1, 2]);
    }

    #[test]
    fn topk_arithmetic() {
        assert_eq!(topk_count(0.0, 40), 0);
        assert_eq!(topk_count(0.05, 40), 2);
        assert_eq!(topk_count(0.10, 40), 4);
        assert_eq!(topk_count(0.01, 40), 1);
    }

    #[test]
    fn vetting() {
        assert!(vet_sensors(&[influence(0, -0.1), influence(1, 0.0)], 0.05)
            .unwrap()
            .is_empty());
        let m = vet_sensors(&[influence(0, 0.2), influence(1, 0.01)], 0.05).unwrap();
        assert_eq!(m.zeroed().iter().copied().collect::<Vec<_>>(), vec![0]);
    }

    /// 5 channels; channel 4 is identically zero; anomalies only in channel 3.
    fn fixture() -> (TimeSeriesDataset, TimeSeriesDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 5;
        let make = |rng: &mut ChaCha8Rng, n: usize, events: &[(usize, usize)]| {
            let mut v = Vec::with_capacity(n * d);
            for t in 0..n {
                for c in 0..d {
                    let mut x = if c == 4 { 0.0 } else { rng.random_range(-1.0..1.0) };
                    if c == 3 && events.iter().any(|&(s, e)| t >= s && t < e) {
                        x += 8.0;
                    }
                    v.push(x);
                }
            }
            let ts: Vec<i64> = (0..n as i64).collect();
            let labels = events
                .iter()
                .map(|&(s, e)| Interval::new(s as i64, e as i64 - 1).unwrap())
                .collect();
            TimeSeriesDataset::new(
                ts,
                v,
                (0..d).map(|c| format!("c{c}")).collect(),
                labels,
                Split::Test,
                Some(1),
            )
            .unwrap()
        };
        let train = make(&mut rng, 400, &[]);
        let test = make(&mut rng, 400, &[(50, 70), (200, 230), (300, 310)]);
        (train, test)
    }

    #[test]
    fn influence_pass() {
        let (train, test) = fixture();
        let tb = make_windows(&[train], 5, 5).unwrap();
        let xb = make_windows(std::slice::from_ref(&test), 5, 5).unwrap();
        let model = fit_gde(&tb, &GdeConfig::default()).unwrap();
        let fp = model.fingerprint().unwrap();
        let truth = EventSet::new(test.label_intervals().to_vec(), EventSource::Truth);
        let ev = Evaluator::new(truth, EvaluatorOptions::default());
        let ctx = ProbeContext::new(&model, &xb, 12.0, &ev, ProbeMetric::WindowF1);
        let inf = channel_influence(&ctx).unwrap();
        assert_eq!(ctx.evaluations(), 6);
        assert_eq!(inf.len(), 5);
        assert!(inf.iter().all(|i| i.delta.is_finite()));
        assert_eq!(inf[4].delta, 0.0);
        let min = inf.iter().map(|i| i.metric_zeroed).fold(f64::INFINITY, f64::min);
        assert_eq!(inf[3].metric_zeroed, min);
        assert!(inf[3].metric_zeroed < inf[0].metric_zeroed);
        assert_eq!(model.fingerprint().unwrap(), fp);

        let ranking = rank_importance(&inf);
        let mut sorted = ranking.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        assert_eq!(ranking[0], 3);
        let curve = topk_disable_sweep(&ctx, &ranking, &[0.0, 0.2]).unwrap();
        assert_eq!(curve[0].metric.to_bits(), inf[0].metric_clean.to_bits());
        assert_eq!(curve[1].disabled, 1);
        assert_eq!(curve[1].metric, inf[3].metric_zeroed);
    }

    #[test]
    fn importance_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("imp.csv");
        std::fs::write(&p, "channel,importance\n0,0.1\n1,0.9\n2,0.5\n").unwrap();
        assert_eq!(read_importance_file(&p, 3).unwrap(), vec![1, 2, 0]);
        assert!(read_importance_file(&p, 4).is_err());
    }
}
