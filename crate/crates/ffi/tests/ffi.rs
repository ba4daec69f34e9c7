use std::ffi::{CStr, CString};
use std::ptr;

use stressbench_ffi::*;

fn last_error() -> String {
    let p = sb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// `n` windows of length 4 over 3 features, deterministic pseudo-noise.
fn tensor(n: usize, offset: f64) -> Vec<f64> {
    (0..n * 4 * 3)
        .map(|i| ((i as f64 * 0.7391).sin() * 43758.5453).fract() + offset)
        .collect()
}

fn fit_gde(data: &[f64], n: usize) -> *mut SbDetector {
    let mut det = ptr::null_mut();
    let st = unsafe { sb_gde_fit(data.as_ptr(), n, 4, 3, SbGdeMode::Full, 1e-6, &mut det) };
    assert_eq!(st, SbStatus::Ok);
    det
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(sb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn f1_matches_formula() {
    let mut out = -1.0;
    assert_eq!(unsafe { sb_f1_score(3, 1, 2, &mut out) }, SbStatus::Ok);
    assert!((out - 6.0 / 9.0).abs() < 1e-15);
    assert_eq!(unsafe { sb_f1_score(0, 0, 0, &mut out) }, SbStatus::Ok);
    assert_eq!(out, 0.0);
    assert_eq!(unsafe { sb_f1_score(1, 1, 1, ptr::null_mut()) }, SbStatus::NullPointer);
    assert!(last_error().contains("out"));
}

#[test]
fn threshold_separates_positives() {
    let scores = [0.1, 0.2, 0.9, 1.0];
    let labels = [0u8, 0, 1, 1];
    let mut t = 0.0;
    let st = unsafe { sb_calibrate_threshold(scores.as_ptr(), labels.as_ptr(), 4, &mut t) };
    assert_eq!(st, SbStatus::Ok);
    assert!((t - 0.55).abs() < 1e-12);
}

#[test]
fn gde_scores_shifted_windows_higher() {
    let train = tensor(50, 0.0);
    let det = fit_gde(&train, 50);
    let mut test = tensor(2, 0.0);
    for v in &mut test[12..] {
        *v += 5.0;
    }
    let mut scores = [0.0; 2];
    let st = unsafe { sb_detector_score(det, test.as_ptr(), 2, 4, 3, scores.as_mut_ptr()) };
    assert_eq!(st, SbStatus::Ok);
    assert!(scores[1] > scores[0]);

    let wrong = vec![0.0; 2 * 4 * 5];
    let st = unsafe { sb_detector_score(det, wrong.as_ptr(), 2, 4, 5, scores.as_mut_ptr()) };
    assert_eq!(st, SbStatus::DimensionMismatch);
    unsafe { sb_detector_free(det) };
}

#[test]
fn fingerprint_buffer_protocol() {
    let train = tensor(20, 0.0);
    let det = fit_gde(&train, 20);
    let mut needed = 0usize;
    let st = unsafe { sb_detector_fingerprint(det, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, SbStatus::BufferTooSmall);
    assert_eq!(needed, 65);
    let mut buf = vec![0 as std::ffi::c_char; needed];
    let st = unsafe { sb_detector_fingerprint(det, buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    assert_eq!(st, SbStatus::Ok);
    let fp = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert_eq!(fp.len(), 64);
    unsafe { sb_detector_free(det) };
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    let train = tensor(30, 0.0);
    let mut det = ptr::null_mut();
    let st = unsafe { sb_mlprec_fit(train.as_ptr(), 30, 4, 3, 2, 50, 0.1, 7, &mut det) };
    assert_eq!(st, SbStatus::Ok);
    assert_eq!(unsafe { sb_detector_save(det, path.as_ptr()) }, SbStatus::Ok);

    let mut loaded = ptr::null_mut();
    assert_eq!(
        unsafe { sb_detector_load(path.as_ptr(), ptr::null(), &mut loaded) },
        SbStatus::Ok
    );
    let test = tensor(3, 0.5);
    let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
    unsafe {
        sb_detector_score(det, test.as_ptr(), 3, 4, 3, a.as_mut_ptr());
        sb_detector_score(loaded, test.as_ptr(), 3, 4, 3, b.as_mut_ptr());
    }
    assert_eq!(a, b);

    let other = CString::new("not-the-dataset").unwrap();
    let mut rejected = ptr::null_mut();
    let st = unsafe { sb_detector_load(path.as_ptr(), other.as_ptr(), &mut rejected) };
    assert_eq!(st, SbStatus::FingerprintMismatch);
    assert!(rejected.is_null());
    unsafe {
        sb_detector_free(det);
        sb_detector_free(loaded);
    }
}

#[test]
fn null_and_bad_arguments() {
    let mut det = ptr::null_mut();
    let st = unsafe { sb_gde_fit(ptr::null(), 1, 4, 3, SbGdeMode::Diagonal, 1e-6, &mut det) };
    assert_eq!(st, SbStatus::NullPointer);
    let data = [0.0; 12];
    let st = unsafe { sb_gde_fit(data.as_ptr(), 1, 0, 3, SbGdeMode::Diagonal, 1e-6, &mut det) };
    assert_eq!(st, SbStatus::InvalidArgument);
    unsafe { sb_detector_free(ptr::null_mut()) };
    unsafe { sb_result_free(ptr::null_mut()) };
    assert!(unsafe { sb_result_json(ptr::null()) }.is_null());
}

#[test]
fn stress_requires_calibrated_spec() {
    let data = tensor(2, 0.0);
    let mut out = vec![0.0; data.len()];
    let raw =
        r#"{"kind":"linear_drift","severity":0.5,"params":{"k":0.1,"global_t":false},"seed":1,"calibration_id":null}"#;
    let spec = stressbench::stress::StressSpec::from_json(raw)
        .unwrap()
        .freeze()
        .unwrap();
    let frozen = CString::new(spec.to_json().unwrap()).unwrap();
    let st = unsafe { sb_stress_apply(frozen.as_ptr(), data.as_ptr(), 2, 4, 3, out.as_mut_ptr()) };
    assert_eq!(st, SbStatus::Ok);
    // Window 0, t = 0: multiplier 1 + 0.1 * 0.
    assert_eq!(out[0], data[0]);
    assert_ne!(out[3], data[3]);

    let unfrozen = CString::new(raw).unwrap();
    let st = unsafe { sb_stress_apply(unfrozen.as_ptr(), data.as_ptr(), 2, 4, 3, out.as_mut_ptr()) };
    assert_eq!(st, SbStatus::InvalidArgument);
    let tampered = CString::new(spec.to_json().unwrap().replace("0.1", "0.2")).unwrap();
    let st = unsafe { sb_stress_apply(tampered.as_ptr(), data.as_ptr(), 2, 4, 3, out.as_mut_ptr()) };
    assert_ne!(st, SbStatus::Ok);
}

const CONFIG: &str = r#"{
  "name": "ffi",
  "seed": 3,
  "dataset": {
    "name": "tiny",
    "source": {"type": "synth", "config": {
      "channels": 4, "length": 1200, "train_length": 1000, "seed": 5,
      "anomalies": [{"type": "mean_shift", "channels": [1], "start": 500, "duration": 80, "magnitude": 10}]}}
  },
  "windows": {"length": 8, "stride": 2},
  "detector": {"kind": "gde", "mode": "diagonal"},
  "stress": {
    "kinds": ["noise"],
    "severities": [0, 1],
    "seeds": [1],
    "maxima": {"noise_percent_max": 50, "linear_max": 0.5, "log_max": 0.5, "log_k1_range": [0.5, 2], "scale_max": 2}
  },
  "metrics": {"latency_window_s": 30, "nab_tolerance_s": 60}
}"#;

#[test]
fn run_experiment_through_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let cfg_c = CString::new(cfg.to_str().unwrap()).unwrap();
    let root = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();

    let mut n_errors = 99;
    assert_eq!(
        unsafe { sb_validate_config(cfg_c.as_ptr(), &mut n_errors) },
        SbStatus::Ok
    );
    assert_eq!(n_errors, 0);

    let mut res = ptr::null_mut();
    let st = unsafe { sb_run_experiment(cfg_c.as_ptr(), root.as_ptr(), 2, &mut res) };
    assert_eq!(st, SbStatus::Ok, "{}", last_error());
    let (mut f1, mut cells) = (0.0, 0usize);
    unsafe {
        assert_eq!(sb_result_clean_f1(res, &mut f1), SbStatus::Ok);
        assert_eq!(sb_result_cell_count(res, &mut cells), SbStatus::Ok);
    }
    assert!((0.0..=1.0).contains(&f1));
    assert_eq!(cells, 2);
    let json = unsafe { CStr::from_ptr(sb_result_json(res)) }.to_str().unwrap();
    assert!(serde_json::from_str::<serde_json::Value>(json).is_ok());

    let mut needed = 0;
    unsafe { sb_result_run_dir(res, ptr::null_mut(), 0, &mut needed) };
    let mut buf = vec![0 as std::ffi::c_char; needed];
    assert_eq!(
        unsafe { sb_result_run_dir(res, buf.as_mut_ptr(), needed, ptr::null_mut()) },
        SbStatus::Ok
    );
    let run_dir = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert!(std::path::Path::new(&run_dir).join("results.csv").exists());
    unsafe { sb_result_free(res) };
}

#[test]
fn invalid_config_reports_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        CONFIG.replace("\"severities\": [0, 1]", "\"severities\": [0, 1.5]"),
    )
    .unwrap();
    let cfg_c = CString::new(cfg.to_str().unwrap()).unwrap();
    let mut n = 0;
    assert_eq!(
        unsafe { sb_validate_config(cfg_c.as_ptr(), &mut n) },
        SbStatus::Validation
    );
    assert!(n >= 1);
    assert!(last_error().contains("severit"));
    let mut res = ptr::null_mut();
    let st = unsafe { sb_run_experiment(cfg_c.as_ptr(), ptr::null(), 1, &mut res) };
    assert_eq!(st, SbStatus::Validation);
    assert!(res.is_null());
}
