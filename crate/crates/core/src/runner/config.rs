//! Experiment configuration, overrides and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::IngestSchema;
use crate::detect::{GdeConfig, MlprecConfig, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::hashing::json_fingerprint;
use crate::metrics::NabMode;
use crate::probe::{ProbeMetric, ZeroMode};
use crate::stress::{NoiseReference, StressKind, StressMaxima};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub windows: WindowConfig,
    pub detector: DetectorConfig,
    #[serde(default)]
    pub threshold: ThresholdPolicy,
    #[serde(default)]
    pub stress: StressGrid,
    #[serde(default)]
    pub probing: ProbingConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Output root; excluded from the config hash.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_dataset_name")]
    pub name: String,
    pub source: DataSource,
    #[serde(default = "default_schema")]
    pub schema: IngestSchema,
    #[serde(default)]
    pub validation: ValidationSplit,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_dataset_name() -> String {
    "dataset".into()
}

fn default_true() -> bool {
    true
}

/// Ingest defaults for files written by this crate (epoch-ms timestamps).
fn default_schema() -> IngestSchema {
    IngestSchema {
        epoch_unit: crate::data::EpochUnit::Milliseconds,
        ..IngestSchema::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        train: PathBuf,
        test: PathBuf,
        /// Label interval file for the test split, overriding the schema's
        /// label source for that file.
        #[serde(default)]
        test_labels: Option<PathBuf>,
    },
    Synth {
        config: SynthConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValidationSplit {
    /// Final fraction of the training rows, chronologically.
    TrainTail { fraction: f64 },
    Csv {
        path: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
    },
}

impl Default for ValidationSplit {
    fn default() -> Self {
        ValidationSplit::TrainTail { fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub length: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub test_stride: Option<usize>,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorConfig {
    Mlprec {
        #[serde(flatten)]
        params: MlprecConfig,
    },
    Gde {
        #[serde(flatten)]
        params: GdeConfig,
    },
    External {
        validation_scores: PathBuf,
        test_scores: PathBuf,
        manifest: PathBuf,
    },
}

impl DetectorConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DetectorConfig::Mlprec { .. } => "mlprec",
            DetectorConfig::Gde { .. } => "gde",
            DetectorConfig::External { .. } => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StressGrid {
    #[serde(default)]
    pub kinds: Vec<StressKind>,
    #[serde(default)]
    pub severities: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub maxima: Option<StressMaxima>,
    #[serde(default)]
    pub noise_reference: NoiseReference,
    #[serde(default)]
    pub compositions: Vec<CompositionConfig>,
}

impl StressGrid {
    pub fn is_empty(&self) -> bool {
        (self.kinds.is_empty() || self.severities.is_empty()) && self.compositions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionConfig {
    pub name: String,
    pub children: Vec<ComponentLevel>,
    /// One composite cell per seed; seeds drive masks and noise draws.
    pub mask_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentLevel {
    pub kind: StressKind,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbingConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub metric: ProbeMetric,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_gain")]
    pub gain_threshold: f64,
    #[serde(default)]
    pub zero_mode: ZeroMode,
    /// External `channel,importance` CSV replacing the influence ranking.
    #[serde(default)]
    pub importance_file: Option<PathBuf>,
}

fn default_fractions() -> Vec<f64> {
    vec![0.0, 0.05, 0.10]
}

fn default_gain() -> f64 {
    0.05
}

impl Default for ProbingConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            metric: ProbeMetric::WindowF1,
            fractions: default_fractions(),
            gain_threshold: default_gain(),
            zero_mode: ZeroMode::PostNormalization,
            importance_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default)]
    pub latency_window_s: Option<f64>,
    #[serde(default)]
    pub nab_tolerance_s: Option<f64>,
    #[serde(default)]
    pub nab_mode: NabMode,
}

/// One `--set key=value` applied on top of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub key: String,
    pub old: Option<Value>,
    pub new: Value,
}

/// Parsed config plus the text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub base_dir: PathBuf,
    pub raw: String,
    pub overrides: Vec<Override>,
}

impl LoadedConfig {
    /// Hash of every effective parameter except the output location.
    pub fn hash(&self) -> Result<String> {
        config_hash(&self.config)
    }

    /// Resolve a config path relative to the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve(&self.base_dir, p)
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let mut c = config.clone();
    c.output_dir = None;
    // Round-trip through Value so map keys are sorted.
    json_fingerprint(&serde_json::to_value(&c)?)
}

/// Apply `key.path=value` overrides to a JSON document. Values are parsed
/// as JSON and fall back to plain strings.
pub fn apply_overrides(doc: &mut Value, sets: &[String]) -> Result<Vec<Override>> {
    let mut audit = Vec::with_capacity(sets.len());
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{s}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("--set has an empty key in `{s}`")));
        }
        let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut *doc;
        for part in &parts[..parts.len() - 1] {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("--set {key}: `{part}` is not inside an object")))?;
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("--set {key}: parent is not an object")))?;
        let last = parts[parts.len() - 1].to_string();
        let old = obj.insert(last, new.clone());
        log::info!("override {key} = {new}");
        audit.push(Override {
            key: key.to_string(),
            old,
            new,
        });
    }
    Ok(audit)
}

pub fn load_config(path: &Path, sets: &[String]) -> Result<LoadedConfig> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut doc: Value = serde_json::from_str(&raw)?;
    let overrides = apply_overrides(&mut doc, sets)?;
    let config: ExperimentConfig = serde_json::from_value(doc)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig {
        config,
        path: path.to_path_buf(),
        base_dir,
        raw,
        overrides,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub file: String,
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(l) => write!(f, "{}:{}: {tag}: {}: {}", self.file, l, self.field, self.message),
            None => write!(f, "{}: {tag}: {}: {}", self.file, self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning)
    }
}

struct Checker<'a> {
    file: String,
    raw: &'a str,
    overridden: Vec<String>,
    report: ValidationReport,
}

impl Checker<'_> {
    /// Line of the first occurrence of `"key"`, searching after the line
    /// of each enclosing key in turn.
    fn line_of(&self, field: &str) -> Option<usize> {
        let lines: Vec<&str> = self.raw.lines().collect();
        let mut from = 0;
        let mut found = None;
        for part in field.split('.') {
            let name = part.split('[').next().unwrap_or(part);
            let needle = format!("\"{name}\"");
            if let Some(i) = lines[from..].iter().position(|l| l.contains(&needle)) {
                from += i;
                found = Some(from + 1);
            }
        }
        found
    }

    fn push(&mut self, severity: Severity, field: &str, message: String) {
        let overridden = self.overridden.iter().any(|k| field.starts_with(k.as_str()));
        let (file, line) = if overridden {
            ("--set".to_string(), None)
        } else {
            (self.file.clone(), self.line_of(field))
        };
        self.report.diagnostics.push(Diagnostic {
            severity,
            file,
            line,
            field: field.to_string(),
            message,
        });
    }

    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.push(Severity::Error, field, message.into());
    }

    fn warn(&mut self, field: &str, message: impl Into<String>) {
        self.push(Severity::Warning, field, message.into());
    }

    fn file_exists(&mut self, base: &Path, field: &str, p: &Path) {
        let full = resolve(base, p);
        if !full.is_file() {
            self.error(field, format!("file not found: {}", full.display()));
        }
    }
}

fn duplicates(seeds: &[u64]) -> Vec<u64> {
    let mut counts = BTreeMap::new();
    for s in seeds {
        *counts.entry(*s).or_insert(0usize) += 1;
    }
    counts.into_iter().filter(|&(_, n)| n > 1).map(|(s, _)| s).collect()
}

/// Validate a config file; parse failures become diagnostics too.
pub fn validate_config_file(path: &Path, sets: &[String]) -> ValidationReport {
    match load_config(path, sets) {
        Ok(loaded) => validate_config(&loaded),
        Err(e) => {
            let line = match &e {
                Error::Json(j) if j.line() > 0 => Some(j.line()),
                _ => None,
            };
            ValidationReport {
                diagnostics: vec![Diagnostic {
                    severity: Severity::Error,
                    file: path.display().to_string(),
                    line,
                    field: "<document>".into(),
                    message: e.to_string(),
                }],
            }
        }
    }
}

pub fn validate_config(loaded: &LoadedConfig) -> ValidationReport {
    let c = &loaded.config;
    let base = loaded.base_dir.as_path();
    let mut ck = Checker {
        file: loaded.path.display().to_string(),
        raw: &loaded.raw,
        overridden: loaded.overrides.iter().map(|o| o.key.clone()).collect(),
        report: ValidationReport::default(),
    };

    match &c.dataset.source {
        DataSource::Csv {
            train,
            test,
            test_labels,
        } => {
            ck.file_exists(base, "dataset.source.train", train);
            ck.file_exists(base, "dataset.source.test", test);
            if let Some(l) = test_labels {
                ck.file_exists(base, "dataset.source.test_labels", l);
            }
        }
        DataSource::Synth { config } => {
            if let Err(e) = config.validate() {
                ck.error("dataset.source.config", e.to_string());
            }
        }
    }
    match &c.dataset.validation {
        ValidationSplit::TrainTail { fraction } => {
            if !(*fraction > 0.0 && *fraction < 1.0) {
                ck.error("dataset.validation.fraction", format!("{fraction} outside (0, 1)"));
            }
        }
        ValidationSplit::Csv { path, labels } => {
            ck.file_exists(base, "dataset.validation.path", path);
            if let Some(l) = labels {
                ck.file_exists(base, "dataset.validation.labels", l);
            }
        }
    }
    if let (Some(gap), Some(step)) = (c.dataset.schema.gap_threshold_s, c.dataset.schema.resample_interval_s) {
        if gap <= step {
            ck.error(
                "dataset.schema.gap_threshold_s",
                format!("gap threshold {gap} s must exceed the sampling interval {step} s"),
            );
        }
    }

    if c.windows.length == 0 {
        ck.error("windows.length", "must be >= 1");
    }
    if c.windows.stride == 0 {
        ck.error("windows.stride", "must be >= 1");
    }
    if c.windows.test_stride == Some(0) {
        ck.error("windows.test_stride", "must be >= 1");
    }

    match &c.detector {
        DetectorConfig::Mlprec { params } => {
            if params.hidden == 0 {
                ck.error("detector.hidden", "must be >= 1");
            }
            if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
                ck.error("detector.learning_rate", "must be positive");
            }
        }
        DetectorConfig::Gde { params } => {
            if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
                ck.error("detector.epsilon", "must be positive");
            }
        }
        DetectorConfig::External {
            validation_scores,
            test_scores,
            manifest,
        } => {
            ck.file_exists(base, "detector.validation_scores", validation_scores);
            ck.file_exists(base, "detector.test_scores", test_scores);
            ck.file_exists(base, "detector.manifest", manifest);
            if !c.stress.is_empty() {
                ck.error(
                    "stress",
                    "external score files cannot be re-scored under stress; leave the grid empty",
                );
            }
            if c.probing.enabled {
                ck.error(
                    "probing.enabled",
                    "external score files cannot be re-scored for probing",
                );
            }
        }
    }

    if !(0.0..=1.0).contains(&c.threshold.quantile) {
        ck.error("threshold.quantile", format!("{} outside [0, 1]", c.threshold.quantile));
    }

    let g = &c.stress;
    for (i, s) in g.severities.iter().enumerate() {
        if !(0.0..=1.0).contains(s) {
            ck.error(
                &format!("stress.severities[{i}]"),
                format!("severity {s} outside [0, 1]"),
            );
        }
    }
    if g.kinds.contains(&StressKind::Compose) {
        ck.error("stress.kinds", "`compose` is not a grid kind; use stress.compositions");
    }
    if !g.kinds.is_empty() && g.seeds.is_empty() {
        ck.error("stress.seeds", "at least one seed is required");
    }
    if !g.kinds.is_empty() && g.severities.is_empty() {
        ck.error("stress.severities", "at least one severity is required");
    }
    let dup = duplicates(&g.seeds);
    if !dup.is_empty() {
        ck.warn("stress.seeds", format!("duplicate seeds {dup:?}"));
    }
    let mut seen_kinds = Vec::new();
    for k in &g.kinds {
        if seen_kinds.contains(k) {
            ck.warn("stress.kinds", format!("kind {k} listed twice"));
        }
        seen_kinds.push(*k);
    }
    match &g.maxima {
        Some(m) => {
            if let Err(e) = m.validate() {
                ck.error("stress.maxima", e.to_string());
            }
        }
        None if !g.is_empty() => ck.error("stress.maxima", "required when a stress grid is declared"),
        None => {}
    }
    let mut names = Vec::new();
    for (i, comp) in g.compositions.iter().enumerate() {
        let field = format!("stress.compositions[{i}]");
        if names.contains(&comp.name) {
            ck.error(
                &format!("{field}.name"),
                format!("duplicate composition name `{}`", comp.name),
            );
        }
        names.push(comp.name.clone());
        if comp.children.is_empty() {
            ck.error(&format!("{field}.children"), "needs at least one child");
        }
        for (j, ch) in comp.children.iter().enumerate() {
            if ch.kind == StressKind::Compose {
                ck.error(
                    &format!("{field}.children[{j}].kind"),
                    "nested compositions are not supported",
                );
            }
            if !(0.0..=1.0).contains(&ch.level) {
                ck.error(
                    &format!("{field}.children[{j}].level"),
                    format!("level {} outside [0, 1]", ch.level),
                );
            }
        }
        if comp.mask_seeds.is_empty() {
            ck.error(&format!("{field}.mask_seeds"), "at least one seed is required");
        }
        let dup = duplicates(&comp.mask_seeds);
        if !dup.is_empty() {
            ck.warn(&format!("{field}.mask_seeds"), format!("duplicate seeds {dup:?}"));
        }
    }

    for (i, f) in c.probing.fractions.iter().enumerate() {
        if !(0.0..=1.0).contains(f) {
            ck.error(
                &format!("probing.fractions[{i}]"),
                format!("fraction {f} outside [0, 1]"),
            );
        }
    }
    if let Some(p) = &c.probing.importance_file {
        ck.file_exists(base, "probing.importance_file", p);
    }
    if let Some(v) = c.metrics.latency_window_s {
        if !(v >= 0.0 && v.is_finite()) {
            ck.error(
                "metrics.latency_window_s",
                format!("{v} must be a non-negative duration"),
            );
        }
    }
    if let Some(v) = c.metrics.nab_tolerance_s {
        if !(v > 0.0 && v.is_finite()) {
            ck.error("metrics.nab_tolerance_s", format!("{v} must be a positive duration"));
        }
    }
    ck.report
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
  "name": "t",
  "dataset": {
    "source": {"type": "synth", "config": {"channels": 3, "length": 200}}
  },
  "windows": {"length": 5},
  "detector": {"kind": "gde", "epsilon": 0.001},
  "stress": {
    "kinds": ["noise"],
    "severities": [0.0, 1.5],
    "seeds": [1, 2, 2],
    "maxima": {"noise_percent_max": 50, "linear_max": 1, "log_max": 1,
               "log_k1_range": [1, 1], "scale_max": 2}
  }
}"#;

    fn write(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.json");
        std::fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn severity_out_of_range_names_the_field_and_line() {
        let (_d, p) = write(BASE);
        let r = validate_config_file(&p, &[]);
        let errs: Vec<_> = r.errors().collect();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "stress.severities[1]");
        assert_eq!(errs[0].line, Some(10));
        assert!(errs[0].to_string().contains("exp.json:10:"));
        let warns: Vec<_> = r.warnings().collect();
        assert_eq!(warns.len(), 1);
        assert!(warns[0].message.contains("[2]"));
    }

    #[test]
    fn well_formed_config_is_clean() {
        let (_d, p) = write(&BASE.replace("1.5", "0.5").replace("[1, 2, 2]", "[1, 2]"));
        assert!(validate_config_file(&p, &[]).diagnostics.is_empty());
    }

    #[test]
    fn overrides_are_audited_and_hashed() {
        let (_d, p) = write(BASE);
        let base = load_config(&p, &[]).unwrap();
        let l = load_config(&p, &["stress.severities=[0.25]".into(), "name=renamed".into()]).unwrap();
        assert_eq!(l.config.stress.severities, vec![0.25]);
        assert_eq!(l.config.name, "renamed");
        assert_eq!(l.overrides.len(), 2);
        assert_eq!(l.overrides[1].old, Some(Value::String("t".into())));
        assert_ne!(l.hash().unwrap(), base.hash().unwrap());
        let r = validate_config(&l);
        assert!(!r.has_errors());
    }

    #[test]
    fn output_dir_does_not_change_the_hash() {
        let (_d, p) = write(BASE);
        let a = load_config(&p, &[]).unwrap();
        let b = load_config(&p, &["output_dir=elsewhere".into()]).unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn parse_errors_are_line_anchored() {
        let (_d, p) = write("{\n  \"name\": \"x\",\n  \"windows\": {\"length\": 5,}\n}");
        let r = validate_config_file(&p, &[]);
        assert!(r.has_errors());
        assert_eq!(r.diagnostics[0].line, Some(3));
    }

    #[test]
    fn missing_files_are_reported() {
        let text = BASE.replace(
            r#"{"type": "synth", "config": {"channels": 3, "length": 200}}"#,
            r#"{"type": "csv", "train": "nope.csv", "test": "nope2.csv"}"#,
        );
        let (_d, p) = write(&text);
        let r = validate_config_file(&p, &[]);
        assert!(r.errors().any(|d| d.field == "dataset.source.train"));
    }

    #[test]
    fn detector_configs_parse() {
        let m: DetectorConfig = serde_json::from_str(r#"{"kind":"mlprec","hidden":4,"epochs":10}"#).unwrap();
        assert!(matches!(m, DetectorConfig::Mlprec { ref params } if params.hidden == 4 && params.epochs == 10));
        assert!(serde_json::from_str::<DetectorConfig>(r#"{"kind":"gde","bogus":1}"#).is_err());
    }
}
