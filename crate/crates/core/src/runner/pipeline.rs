//! The fixed evaluation pipeline.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, DetectorConfig, LoadedConfig, ValidationSplit};
use super::output;
use crate::data::{
    apply_normalizer, fit_normalizer, ingest_csv, make_windows, seconds_to_millis, segment_by_gaps, LabelSource,
    NormStats, Split, TimeSeriesDataset, WindowBatch,
};
use crate::detect::{
    decide, fit_gde, fit_mlprec, load_external_scores, read_score_manifest, select_threshold, DetectorModel,
    ExternalScores, ThresholdMethod, ThresholdSelection,
};
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, json_fingerprint};
use crate::metrics::{Evaluator, EvaluatorOptions, EventSet, EventSource, MetricsReport, Provenance};
use crate::probe::{
    channel_influence, rank_importance, read_importance_file, topk_disable_sweep, vet_sensors, ChannelInfluence,
    ProbeContext, ProbeMetric, TopkPoint,
};
use crate::stress::{calibrate_severity, compose, NoiseReference, StressKind, StressSpec};

const STRESS_STREAM: u64 = 0x5354;
const COMPOSE_STREAM: u64 = 0x434F;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "STRESSBENCH_OUTPUT_ROOT";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for the sweep; 0 uses all cores.
    pub workers: usize,
    /// Output root override; see [`output_root`].
    pub output_root: Option<PathBuf>,
    /// Skip writing a run directory.
    pub dry_run: bool,
    /// Load a persisted model instead of fitting.
    pub model_path: Option<PathBuf>,
    /// Test hook: perturb the threshold after the freeze point.
    pub inject_threshold_mutation: bool,
}

/// Prepared, normalised, windowed splits.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: WindowBatch,
    pub validation: WindowBatch,
    pub test: WindowBatch,
    pub train_reference: TimeSeriesDataset,
    pub validation_reference: TimeSeriesDataset,
    pub test_events: EventSet,
    pub normalizer: Option<NormStats>,
    pub n_features: usize,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenCalibration {
    pub cell: String,
    pub calibration_id: String,
}

/// Everything fixed at the freeze point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenManifest {
    pub config_hash: String,
    pub model_fingerprint: String,
    #[serde(with = "crate::float_serde")]
    pub threshold: f64,
    pub threshold_method: ThresholdMethod,
    pub threshold_fallback: bool,
    pub normalizer_fingerprint: Option<String>,
    pub calibrations: Vec<FrozenCalibration>,
}

impl FrozenManifest {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// `clean`, a stress kind, or a composition name.
    pub stressor: String,
    pub kind: Option<StressKind>,
    pub composition: bool,
    pub severity: f64,
    pub seed: u64,
    pub calibration_id: Option<String>,
    pub report: MetricsReport,
}

impl CellResult {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.stressor, self.severity, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub metric: ProbeMetric,
    pub influences: Vec<ChannelInfluence>,
    pub ranking: Vec<usize>,
    /// `zero_channel_influence` or `importance_file`.
    pub ranking_source: String,
    pub topk: Vec<TopkPoint>,
    pub vetted_channels: Vec<usize>,
    pub clean_metric: f64,
    pub vetted_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub dataset: String,
    pub detector: String,
    pub threshold: ThresholdSelection,
    pub clean: CellResult,
    pub cells: Vec<CellResult>,
    pub probing: Option<ProbeOutcome>,
    pub frozen: FrozenManifest,
    pub run_dir: Option<PathBuf>,
    pub steps: Vec<String>,
}

impl SweepResult {
    /// Clean baseline followed by every stress cell, in grid order.
    pub fn rows(&self) -> impl Iterator<Item = &CellResult> {
        std::iter::once(&self.clean).chain(&self.cells)
    }
}

fn step(steps: &mut Vec<String>, s: impl Into<String>) {
    let s = s.into();
    log::info!("pipeline: {s}");
    steps.push(s);
}

fn load_splits(loaded: &LoadedConfig) -> Result<(TimeSeriesDataset, TimeSeriesDataset, Option<TimeSeriesDataset>)> {
    let ds = &loaded.config.dataset;
    match &ds.source {
        DataSource::Synth { config } => {
            let (train, test) = crate::synth::generate(config)?;
            Ok((train, test, None))
        }
        DataSource::Csv {
            train,
            test,
            test_labels,
        } => {
            let mut schema = ds.schema.clone();
            if let LabelSource::File(p) = &schema.labels {
                schema.labels = LabelSource::File(loaded.resolve(p));
            }
            let train = ingest_csv(&loaded.resolve(train), &schema, Split::Train)?;
            let mut test_schema = schema.clone();
            if let Some(l) = test_labels {
                test_schema.labels = LabelSource::File(loaded.resolve(l));
            }
            let test = ingest_csv(&loaded.resolve(test), &test_schema, Split::Test)?;
            let validation = match &ds.validation {
                ValidationSplit::Csv { path, labels } => {
                    let mut vs = schema.clone();
                    if let Some(l) = labels {
                        vs.labels = LabelSource::File(loaded.resolve(l));
                    }
                    Some(ingest_csv(&loaded.resolve(path), &vs, Split::Validation)?)
                }
                ValidationSplit::TrainTail { .. } => None,
            };
            Ok((train, test, validation))
        }
    }
}

/// ingest -> clean -> segment -> normalise -> window.
pub fn prepare(loaded: &LoadedConfig) -> Result<Prepared> {
    let cfg = &loaded.config;
    let mut steps = Vec::new();
    let (train_full, test, explicit_val) = load_splits(loaded)?;
    step(
        &mut steps,
        format!("ingest: train {} rows, test {} rows", train_full.len(), test.len()),
    );
    step(&mut steps, "clean: imputation and resampling applied at ingest");

    let (train, validation) = match (&cfg.dataset.validation, explicit_val) {
        (_, Some(v)) => (train_full, v),
        (ValidationSplit::TrainTail { fraction }, None) => {
            let n = train_full.len();
            let k = ((n as f64) * fraction).round() as usize;
            if k == 0 || k >= n {
                return Err(Error::Config(format!(
                    "validation fraction {fraction} of {n} training rows leaves an empty split"
                )));
            }
            let val = train_full.slice_rows(n - k, n)?.with_split(Split::Validation);
            (train_full.slice_rows(0, n - k)?, val)
        }
        (ValidationSplit::Csv { .. }, None) => unreachable!("csv validation is loaded with the csv source"),
    };

    let segment = |ds: &TimeSeriesDataset| -> Result<Vec<TimeSeriesDataset>> {
        match cfg.dataset.schema.gap_threshold_s {
            Some(g) => segment_by_gaps(ds, seconds_to_millis(g)),
            None => Ok(vec![ds.clone()]),
        }
    };
    let (train_runs, val_runs, test_runs) = (segment(&train)?, segment(&validation)?, segment(&test)?);
    step(
        &mut steps,
        format!(
            "segment: {} / {} / {} runs",
            train_runs.len(),
            val_runs.len(),
            test_runs.len()
        ),
    );

    let normalizer = if cfg.dataset.normalize {
        Some(fit_normalizer(&train)?)
    } else {
        None
    };
    let norm = |runs: Vec<TimeSeriesDataset>| -> Result<Vec<TimeSeriesDataset>> {
        match &normalizer {
            Some(s) => runs.iter().map(|r| apply_normalizer(r, s)).collect(),
            None => Ok(runs),
        }
    };
    let (train_runs, val_runs, test_runs) = (norm(train_runs)?, norm(val_runs)?, norm(test_runs)?);
    step(
        &mut steps,
        if normalizer.is_some() {
            "normalize: train-split statistics"
        } else {
            "normalize: disabled"
        },
    );

    let w = &cfg.windows;
    let train_b = make_windows(&train_runs, w.length, w.stride)?;
    let val_b = make_windows(&val_runs, w.length, w.stride)?;
    let test_b = make_windows(&test_runs, w.length, w.test_stride.unwrap_or(w.stride))?;
    for (name, b) in [("train", &train_b), ("validation", &val_b), ("test", &test_b)] {
        if b.is_empty() {
            return Err(Error::Empty(format!(
                "{name} split yields no windows of length {}",
                w.length
            )));
        }
    }
    step(
        &mut steps,
        format!(
            "window: {} / {} / {} windows of length {}",
            train_b.len(),
            val_b.len(),
            test_b.len(),
            w.length
        ),
    );

    let test_events = EventSet::new(
        test_runs
            .iter()
            .flat_map(|r| r.label_intervals().iter().copied())
            .collect(),
        EventSource::Truth,
    );
    Ok(Prepared {
        n_features: train_b.n_features(),
        train: train_b,
        validation: val_b,
        test: test_b,
        train_reference: TimeSeriesDataset::concat(&train_runs)?,
        validation_reference: TimeSeriesDataset::concat(&val_runs)?,
        test_events,
        normalizer,
        steps,
    })
}

/// Fit the configured detector on the training windows.
pub fn fit_detector(loaded: &LoadedConfig, prepared: &Prepared) -> Result<DetectorModel> {
    match &loaded.config.detector {
        DetectorConfig::Mlprec { params } => fit_mlprec(&prepared.train, params),
        DetectorConfig::Gde { params } => fit_gde(&prepared.train, params),
        DetectorConfig::External {
            validation_scores,
            test_scores,
            manifest,
        } => {
            let manifest = read_score_manifest(&loaded.resolve(manifest))?;
            let unwrap = |m: DetectorModel| match m {
                DetectorModel::ExternalScores(e) => e,
                _ => unreachable!(),
            };
            let val = unwrap(load_external_scores(&loaded.resolve(validation_scores), &manifest)?);
            let test = unwrap(load_external_scores(&loaded.resolve(test_scores), &manifest)?);
            let mut scores = val.scores;
            for (k, v) in test.scores {
                if scores.insert(k, v).is_some() {
                    return Err(Error::DuplicateScore(k.to_string()));
                }
            }
            Ok(DetectorModel::ExternalScores(ExternalScores {
                scores,
                granularity: val.granularity,
                aggregation: val.aggregation,
                source_fingerprint: crate::hashing::sha256_hex(
                    format!("{}{}", val.source_fingerprint, test.source_fingerprint).as_bytes(),
                ),
            }))
        }
    }
}

/// Fit (or load) the model and select the validation threshold.
pub fn fit_and_calibrate(
    loaded: &LoadedConfig,
    prepared: &Prepared,
    model_path: Option<&Path>,
) -> Result<(DetectorModel, ThresholdSelection)> {
    let model = match model_path {
        Some(p) => DetectorModel::load(p, Some(&prepared.train.fingerprint()))?,
        None => fit_detector(loaded, prepared)?,
    };
    let val_scores = model.score(&prepared.validation)?;
    let selection = select_threshold(
        val_scores.scores(),
        prepared.validation.labels(),
        &loaded.config.threshold,
    )?;
    Ok((model, selection))
}

struct PlannedCell {
    stressor: String,
    kind: Option<StressKind>,
    composition: bool,
    severity: f64,
    seed: u64,
    spec: StressSpec,
}

fn plan_cells(loaded: &LoadedConfig, prepared: &Prepared) -> Result<Vec<PlannedCell>> {
    let cfg = &loaded.config;
    let g = &cfg.stress;
    if g.is_empty() {
        return Ok(Vec::new());
    }
    let maxima = g
        .maxima
        .as_ref()
        .ok_or_else(|| Error::Config("stress.maxima is required".into()))?;
    let reference = match g.noise_reference {
        NoiseReference::Validation => &prepared.validation_reference,
        NoiseReference::Train => &prepared.train_reference,
    };
    let w = cfg.windows.length;
    let mut cells = Vec::new();
    for &kind in &g.kinds {
        for &severity in &g.severities {
            for &seed in &g.seeds {
                let spec_seed = derive_seed(cfg.seed, STRESS_STREAM, seed);
                cells.push(PlannedCell {
                    stressor: kind.as_str().to_string(),
                    kind: Some(kind),
                    composition: false,
                    severity,
                    seed,
                    spec: calibrate_severity(reference, kind, severity, maxima, w, spec_seed)?,
                });
            }
        }
    }
    for comp in &g.compositions {
        for &seed in &comp.mask_seeds {
            let base = derive_seed(cfg.seed, STRESS_STREAM, seed);
            let children = comp
                .children
                .iter()
                .enumerate()
                .map(|(i, ch)| {
                    calibrate_severity(
                        reference,
                        ch.kind,
                        ch.level,
                        maxima,
                        w,
                        derive_seed(base, COMPOSE_STREAM, i as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let spec = compose(children)?;
            cells.push(PlannedCell {
                stressor: comp.name.clone(),
                kind: Some(StressKind::Compose),
                composition: true,
                severity: spec.severity(),
                seed,
                spec,
            });
        }
    }
    Ok(cells)
}

fn frozen_manifest(
    config_hash: &str,
    model: &DetectorModel,
    threshold: f64,
    selection: &ThresholdSelection,
    normalizer: Option<&NormStats>,
    cells: &[PlannedCell],
) -> Result<FrozenManifest> {
    let calibrations = cells
        .iter()
        .map(|c| {
            // Recompute rather than trust the stored id.
            Ok(FrozenCalibration {
                cell: format!("{}/{}/{}", c.stressor, c.severity, c.seed),
                calibration_id: c.spec.content_hash()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrozenManifest {
        config_hash: config_hash.to_string(),
        model_fingerprint: model.fingerprint()?,
        threshold,
        threshold_method: selection.method,
        threshold_fallback: selection.fallback,
        normalizer_fingerprint: normalizer.map(json_fingerprint).transpose()?,
        calibrations,
    })
}

/// Timestamped directory under the output root, unique per call.
pub fn output_root(loaded: &LoadedConfig, opts: &RunOptions) -> PathBuf {
    if let Some(r) = &opts.output_root {
        return r.clone();
    }
    if let Ok(r) = std::env::var(OUTPUT_ROOT_ENV) {
        if !r.is_empty() {
            return PathBuf::from(r);
        }
    }
    match &loaded.config.output_dir {
        Some(d) => loaded.resolve(d),
        None => PathBuf::from("runs"),
    }
}

fn create_run_dir(root: &Path, config_hash: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = format!("{}-{stamp}", &config_hash[..12]);
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

fn evaluate(
    model: &DetectorModel,
    batch: &WindowBatch,
    threshold: f64,
    evaluator: &Evaluator,
    provenance: Provenance,
) -> Result<MetricsReport> {
    let scores = model.score(batch)?;
    let decisions = decide(scores.scores(), threshold);
    evaluator.evaluate(batch, &decisions, provenance)
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Run the full pipeline and, unless `dry_run`, write the run directory.
pub fn run_experiment(loaded: &LoadedConfig, opts: &RunOptions) -> Result<SweepResult> {
    let pool = build_pool(opts.workers)?;
    pool.install(|| run_inner(loaded, opts))
}

fn run_inner(loaded: &LoadedConfig, opts: &RunOptions) -> Result<SweepResult> {
    let cfg = &loaded.config;
    let config_hash = loaded.hash()?;
    let run_dir = if opts.dry_run {
        None
    } else {
        let dir = create_run_dir(&output_root(loaded, opts), &config_hash)?;
        output::write_config(&dir, loaded, &config_hash)?;
        Some(dir)
    };

    let prepared = prepare(loaded)?;
    let mut steps = prepared.steps.clone();
    let (model, selection) = fit_and_calibrate(loaded, &prepared, opts.model_path.as_deref())?;
    step(
        &mut steps,
        format!(
            "fit: {} on {} training windows",
            model.kind_name(),
            prepared.train.len()
        ),
    );
    step(
        &mut steps,
        format!(
            "calibrate threshold: {:?}{} = {}",
            selection.method,
            if selection.fallback {
                " (no validation positives)"
            } else {
                ""
            },
            crate::float_serde::display(selection.threshold)
        ),
    );
    let cells = plan_cells(loaded, &prepared)?;

    let frozen = frozen_manifest(
        &config_hash,
        &model,
        selection.threshold,
        &selection,
        prepared.normalizer.as_ref(),
        &cells,
    )?;
    let frozen_bytes = frozen.to_bytes()?;
    if let Some(dir) = &run_dir {
        output::write_bytes(&dir.join("frozen.json"), &frozen_bytes)?;
    }
    step(&mut steps, format!("freeze: {} stress calibrations", cells.len()));

    let mut threshold = selection.threshold;
    let model_fp = frozen.model_fingerprint.clone();
    let evaluator = Evaluator::new(
        prepared.test_events.clone(),
        EvaluatorOptions {
            latency_window_ms: cfg.metrics.latency_window_s.map(seconds_to_millis),
            nab_tolerance_ms: cfg.metrics.nab_tolerance_s.map(seconds_to_millis),
            nab_mode: cfg.metrics.nab_mode,
            changepoints: None,
        },
    );

    let clean_report = evaluate(
        &model,
        &prepared.test,
        threshold,
        &evaluator,
        Provenance {
            detector_fingerprint: model_fp.clone(),
            stress: None,
            threshold,
        },
    )?;
    let clean = CellResult {
        stressor: "clean".into(),
        kind: None,
        composition: false,
        severity: 0.0,
        seed: cfg.seed,
        calibration_id: None,
        report: clean_report,
    };
    step(
        &mut steps,
        format!("evaluate clean: window F1 {}", clean.report.window.f1),
    );

    if opts.inject_threshold_mutation {
        log::warn!("injecting a post-freeze threshold mutation");
        threshold = if threshold.is_finite() {
            threshold + threshold.abs() * 0.01 + 1e-6
        } else {
            f64::MAX
        };
    }

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|c| {
            let stressed = c.spec.apply(&prepared.test)?;
            let report = evaluate(
                &model,
                &stressed,
                threshold,
                &evaluator,
                Provenance {
                    detector_fingerprint: model_fp.clone(),
                    stress: Some(c.spec.clone()),
                    threshold,
                },
            )?;
            Ok(CellResult {
                stressor: c.stressor.clone(),
                kind: c.kind,
                composition: c.composition,
                severity: c.severity,
                seed: c.seed,
                calibration_id: c.spec.calibration_id().map(str::to_string),
                report,
            })
        })
        .collect::<Result<_>>()?;
    step(&mut steps, format!("evaluate stress: {} cells", results.len()));

    let probing = if cfg.probing.enabled {
        let p = &cfg.probing;
        let ctx = ProbeContext::new(&model, &prepared.test, threshold, &evaluator, p.metric)
            .with_zero_mode(p.zero_mode, prepared.normalizer.as_ref())?;
        let influences = channel_influence(&ctx)?;
        let (ranking, source) = match &p.importance_file {
            Some(f) => (
                read_importance_file(&loaded.resolve(f), prepared.n_features)?,
                "importance_file",
            ),
            None => (rank_importance(&influences), "zero_channel_influence"),
        };
        let topk = topk_disable_sweep(&ctx, &ranking, &p.fractions)?;
        let mask = vet_sensors(&influences, p.gain_threshold)?;
        let vetted: Vec<usize> = mask.zeroed().iter().copied().collect();
        let vetted_metric = ctx.evaluate(&vetted)?;
        step(
            &mut steps,
            format!("probe: {} channels, vetted {:?}", influences.len(), vetted),
        );
        Some(ProbeOutcome {
            metric: p.metric,
            clean_metric: influences.first().map_or(vetted_metric, |i| i.metric_clean),
            influences,
            ranking,
            ranking_source: source.into(),
            topk,
            vetted_channels: vetted,
            vetted_metric,
        })
    } else {
        None
    };

    let post = frozen_manifest(
        &config_hash,
        &model,
        threshold,
        &selection,
        prepared.normalizer.as_ref(),
        &cells,
    )?;
    let post_bytes = post.to_bytes()?;
    if let Some(dir) = &run_dir {
        output::write_bytes(&dir.join("frozen.post.json"), &post_bytes)?;
    }
    if post_bytes != frozen_bytes {
        return Err(Error::FrozenStateMutated(
            "frozen manifest after the run differs from the one written at the freeze point".into(),
        ));
    }
    step(&mut steps, "verify freeze: manifests byte-equal");

    let mut result = SweepResult {
        config_hash,
        dataset: cfg.dataset.name.clone(),
        detector: model.kind_name().to_string(),
        threshold: selection,
        clean,
        cells: results,
        probing,
        frozen,
        run_dir: run_dir.clone(),
        steps,
    };
    if let Some(dir) = &run_dir {
        output::write_run(dir, loaded, &mut result)?;
    }
    Ok(result)
}
