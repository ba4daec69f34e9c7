//! C ABI for the stressbench harness.
//!
//! Every function returns an [`SbStatus`]. On failure the message for the
//! calling thread is available from [`sb_last_error_message`]. Objects are
//! opaque handles released with their `_free` function. Window tensors are
//! row-major `n_windows x window_length x n_features` `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use stressbench::data::WindowBatch;
use stressbench::detect::{fit_gde, fit_mlprec, max_f1_threshold, DetectorModel, GdeConfig, GdeMode, MlprecConfig};
use stressbench::metrics::{f1, ConfusionCounts};
use stressbench::runner::{load_config, run_experiment, validate_config, RunOptions, SweepResult};
use stressbench::stress::StressSpec;
use stressbench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    Frozen = 6,
    Diverged = 7,
    FingerprintMismatch = 8,
    BufferTooSmall = 9,
    Validation = 10,
    Panic = 11,
    Other = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbGdeMode {
    Diagonal = 0,
    Full = 1,
}

/// Fitted detector handle.
pub struct SbDetector {
    model: DetectorModel,
}

/// Completed experiment handle.
pub struct SbRunResult {
    result: SweepResult,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> SbStatus {
    match e {
        Error::Io { .. } => SbStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::MalformedRow { .. } | Error::Schema(_) => SbStatus::Parse,
        Error::DimensionMismatch { .. } => SbStatus::DimensionMismatch,
        Error::Frozen(_) | Error::FrozenStateMutated(_) => SbStatus::Frozen,
        Error::Diverged { .. } => SbStatus::Diverged,
        Error::FingerprintMismatch { .. } => SbStatus::FingerprintMismatch,
        Error::Config(_) => SbStatus::Validation,
        Error::InvalidArgument(_) | Error::Empty(_) | Error::NonMonotoneTimestamps(_) => SbStatus::InvalidArgument,
        _ => SbStatus::Other,
    }
}

/// Run `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (SbStatus, String)>) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SbStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SbStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (SbStatus, String) {
    (SbStatus::NullPointer, format!("`{name}` is null"))
}

fn invalid(msg: impl Into<String>) -> (SbStatus, String) {
    (SbStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, (SbStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn batch_arg(
    data: *const f64,
    n_windows: usize,
    window_length: usize,
    n_features: usize,
) -> Result<WindowBatch, (SbStatus, String)> {
    if data.is_null() {
        return Err(null("data"));
    }
    if n_windows == 0 || window_length == 0 || n_features == 0 {
        return Err(invalid("tensor dimensions must be non-zero"));
    }
    let len = n_windows
        .checked_mul(window_length)
        .and_then(|v| v.checked_mul(n_features))
        .ok_or_else(|| invalid("tensor size overflows"))?;
    let values = std::slice::from_raw_parts(data, len).to_vec();
    let starts: Vec<i64> = (0..n_windows as i64).map(|b| b * window_length as i64).collect();
    let ends: Vec<i64> = starts.iter().map(|s| s + window_length as i64 - 1).collect();
    WindowBatch::from_parts(
        values,
        window_length,
        n_features,
        window_length,
        starts,
        ends,
        (0..n_windows).map(|b| b * window_length).collect(),
        vec![false; n_windows],
        (0..n_features).map(|f| format!("f{f}")).collect(),
    )
    .map_err(lib)
}

/// Copy `s` with a NUL terminator into `buf`. `needed` (optional) receives
/// the required size including the terminator.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), (SbStatus, String)> {
    let bytes = s.as_bytes();
    if !needed.is_null() {
        *needed = bytes.len() + 1;
    }
    if buf.is_null() || len < bytes.len() + 1 {
        return Err((
            SbStatus::BufferTooSmall,
            format!("buffer of {len} bytes, {} needed", bytes.len() + 1),
        ));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn sb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Window F1 `2TP / (2TP + FP + FN)`; 0 when the denominator is 0.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn sb_f1_score(tp: u64, fp: u64, fn_: u64, out: *mut f64) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = f1(&ConfusionCounts { tp, fp, tn: 0, fn_ }).value;
        Ok(())
    })
}

/// Max-F1 threshold over `n` validation scores and 0/1 labels.
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; `out` to a `double`.
#[no_mangle]
pub unsafe extern "C" fn sb_calibrate_threshold(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> SbStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || out.is_null() {
            return Err(null("scores/labels/out"));
        }
        let s = std::slice::from_raw_parts(scores, n);
        let l: Vec<bool> = std::slice::from_raw_parts(labels, n).iter().map(|&v| v != 0).collect();
        *out = max_f1_threshold(s, &l).map_err(lib)?.0;
        Ok(())
    })
}

fn emit(model: DetectorModel, out: *mut *mut SbDetector) {
    // SAFETY: callers check `out` before fitting.
    unsafe { *out = Box::into_raw(Box::new(SbDetector { model })) };
}

/// Fit a Gaussian density detector on training windows.
///
/// # Safety
/// `data` must hold `n_windows * window_length * n_features` doubles;
/// `out` must be valid. Free the handle with [`sb_detector_free`].
#[no_mangle]
pub unsafe extern "C" fn sb_gde_fit(
    data: *const f64,
    n_windows: usize,
    window_length: usize,
    n_features: usize,
    mode: SbGdeMode,
    epsilon: f64,
    out: *mut *mut SbDetector,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let batch = batch_arg(data, n_windows, window_length, n_features)?;
        let cfg = GdeConfig {
            mode: match mode {
                SbGdeMode::Diagonal => GdeMode::Diagonal,
                SbGdeMode::Full => GdeMode::Full,
            },
            epsilon,
            ..GdeConfig::default()
        };
        emit(fit_gde(&batch, &cfg).map_err(lib)?, out);
        Ok(())
    })
}

/// Fit a linear autoencoder detector on training windows.
///
/// # Safety
/// As [`sb_gde_fit`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sb_mlprec_fit(
    data: *const f64,
    n_windows: usize,
    window_length: usize,
    n_features: usize,
    hidden: usize,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
    out: *mut *mut SbDetector,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let batch = batch_arg(data, n_windows, window_length, n_features)?;
        let cfg = MlprecConfig {
            epochs,
            learning_rate,
            seed,
            ..MlprecConfig::new(hidden)
        };
        emit(fit_mlprec(&batch, &cfg).map_err(lib)?, out);
        Ok(())
    })
}

/// Load a persisted model. `expected_dataset` may be NULL to skip the
/// dataset fingerprint check.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sb_detector_load(
    path: *const c_char,
    expected_dataset: *const c_char,
    out: *mut *mut SbDetector,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = path_arg(path, "path")?;
        let expected = if expected_dataset.is_null() {
            None
        } else {
            Some(
                CStr::from_ptr(expected_dataset)
                    .to_str()
                    .map_err(|_| invalid("`expected_dataset` is not UTF-8"))?
                    .to_string(),
            )
        };
        emit(DetectorModel::load(&p, expected.as_deref()).map_err(lib)?, out);
        Ok(())
    })
}

/// # Safety
/// `det` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sb_detector_save(det: *const SbDetector, path: *const c_char) -> SbStatus {
    guard(|| {
        let det = det.as_ref().ok_or_else(|| null("det"))?;
        let p = path_arg(path, "path")?;
        det.model.save(&p).map_err(lib)
    })
}

/// Score windows; writes `n_windows` scores (higher = more anomalous).
///
/// # Safety
/// `det` must be a live handle; `data` as in [`sb_gde_fit`]; `out_scores`
/// must hold `n_windows` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_detector_score(
    det: *const SbDetector,
    data: *const f64,
    n_windows: usize,
    window_length: usize,
    n_features: usize,
    out_scores: *mut f64,
) -> SbStatus {
    guard(|| {
        let det = det.as_ref().ok_or_else(|| null("det"))?;
        if out_scores.is_null() {
            return Err(null("out_scores"));
        }
        let batch = batch_arg(data, n_windows, window_length, n_features)?;
        let scores = det.model.score(&batch).map_err(lib)?;
        ptr::copy_nonoverlapping(scores.scores().as_ptr(), out_scores, n_windows);
        Ok(())
    })
}

/// Hex fingerprint of every model parameter.
///
/// # Safety
/// `det` must be a live handle; `buf` must hold `len` bytes; `needed` may
/// be NULL.
#[no_mangle]
pub unsafe extern "C" fn sb_detector_fingerprint(
    det: *const SbDetector,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SbStatus {
    guard(|| {
        let det = det.as_ref().ok_or_else(|| null("det"))?;
        write_str(&det.model.fingerprint().map_err(lib)?, buf, len, needed)
    })
}

/// # Safety
/// `det` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_detector_free(det: *mut SbDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Apply a calibrated stress spec (JSON with a matching calibration id)
/// to windows, writing the stressed tensor to `out`.
///
/// # Safety
/// `spec_json` must be NUL-terminated; `data` and `out` must each hold
/// `n_windows * window_length * n_features` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_stress_apply(
    spec_json: *const c_char,
    data: *const f64,
    n_windows: usize,
    window_length: usize,
    n_features: usize,
    out: *mut f64,
) -> SbStatus {
    guard(|| {
        if spec_json.is_null() || out.is_null() {
            return Err(null("spec_json/out"));
        }
        let text = CStr::from_ptr(spec_json)
            .to_str()
            .map_err(|_| invalid("`spec_json` is not UTF-8"))?;
        let spec = StressSpec::from_json(text).map_err(lib)?;
        if !spec.is_frozen() {
            return Err(invalid("stress spec has no calibration_id"));
        }
        let batch = batch_arg(data, n_windows, window_length, n_features)?;
        let stressed = spec.apply(&batch).map_err(lib)?;
        ptr::copy_nonoverlapping(stressed.data().as_ptr(), out, stressed.data().len());
        Ok(())
    })
}

/// Validate a config file. `n_errors` receives the error count; the
/// status is `Validation` when it is non-zero.
///
/// # Safety
/// `config_path` must be NUL-terminated; `n_errors` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sb_validate_config(config_path: *const c_char, n_errors: *mut usize) -> SbStatus {
    guard(|| {
        let p = path_arg(config_path, "config_path")?;
        let report = stressbench::runner::validate_config_file(&p, &[]);
        let errors: Vec<String> = report.errors().map(|d| d.to_string()).collect();
        if !n_errors.is_null() {
            *n_errors = errors.len();
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err((SbStatus::Validation, errors.join("\n")))
        }
    })
}

/// Run an experiment config end to end. `output_root` may be NULL to use
/// the default; `workers` 0 uses all cores.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be valid. Free the result
/// with [`sb_result_free`].
#[no_mangle]
pub unsafe extern "C" fn sb_run_experiment(
    config_path: *const c_char,
    output_root: *const c_char,
    workers: usize,
    out: *mut *mut SbRunResult,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = path_arg(config_path, "config_path")?;
        let root = if output_root.is_null() {
            None
        } else {
            Some(path_arg(output_root, "output_root")?)
        };
        let loaded = load_config(&p, &[]).map_err(lib)?;
        let report = validate_config(&loaded);
        if report.has_errors() {
            let msg: Vec<String> = report.errors().map(|d| d.to_string()).collect();
            return Err((SbStatus::Validation, msg.join("\n")));
        }
        let opts = RunOptions {
            workers,
            output_root: root,
            ..RunOptions::default()
        };
        let result = run_experiment(&loaded, &opts).map_err(lib)?;
        let json = CString::new(serde_json::to_string(&result).map_err(|e| lib(e.into()))?)
            .map_err(|_| invalid("result JSON contains NUL"))?;
        *out = Box::into_raw(Box::new(SbRunResult { result, json }));
        Ok(())
    })
}

/// Window F1 of the clean baseline.
///
/// # Safety
/// `res` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sb_result_clean_f1(res: *const SbRunResult, out: *mut f64) -> SbStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = res.result.clean.report.window.f1;
        Ok(())
    })
}

/// Number of stress cells (excluding the clean baseline).
///
/// # Safety
/// `res` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sb_result_cell_count(res: *const SbRunResult, out: *mut usize) -> SbStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = res.result.cells.len();
        Ok(())
    })
}

/// The full result as JSON, owned by the handle.
///
/// # Safety
/// `res` must be a live handle. The string lives until [`sb_result_free`].
#[no_mangle]
pub unsafe extern "C" fn sb_result_json(res: *const SbRunResult) -> *const c_char {
    res.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// Run directory path.
///
/// # Safety
/// `res` must be a live handle; `buf` must hold `len` bytes; `needed` may
/// be NULL.
#[no_mangle]
pub unsafe extern "C" fn sb_result_run_dir(
    res: *const SbRunResult,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SbStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        let dir = res
            .result
            .run_dir
            .as_ref()
            .map(|d| d.display().to_string())
            .unwrap_or_default();
        write_str(&dir, buf, len, needed)
    })
}

/// # Safety
/// `res` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_result_free(res: *mut SbRunResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
