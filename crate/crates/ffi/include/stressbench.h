#ifndef STRESSBENCH_H
#define STRESSBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_ARGUMENT = 2,
  SB_STATUS_IO = 3,
  SB_STATUS_PARSE = 4,
  SB_STATUS_DIMENSION_MISMATCH = 5,
  SB_STATUS_FROZEN = 6,
  SB_STATUS_DIVERGED = 7,
  SB_STATUS_FINGERPRINT_MISMATCH = 8,
  SB_STATUS_BUFFER_TOO_SMALL = 9,
  SB_STATUS_VALIDATION = 10,
  SB_STATUS_PANIC = 11,
  SB_STATUS_OTHER = 12,
} SbStatus;

typedef enum SbGdeMode {
  SB_GDE_MODE_DIAGONAL = 0,
  SB_GDE_MODE_FULL = 1,
} SbGdeMode;

/**
 * Fitted detector handle.
 */
typedef struct SbDetector SbDetector;

/**
 * Completed experiment handle.
 */
typedef struct SbRunResult SbRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sb_version(void);

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call on the same thread.
 */
const char *sb_last_error_message(void);

/**
 * Window F1 `2TP / (2TP + FP + FN)`; 0 when the denominator is 0.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum SbStatus sb_f1_score(uint64_t tp, uint64_t fp, uint64_t fn_, double *out);

/**
 * Max-F1 threshold over `n` validation scores and 0/1 labels.
 *
 * # Safety
 * `scores` and `labels` must point to `n` elements; `out` to a `double`.
 */
enum SbStatus sb_calibrate_threshold(const double *scores,
                                     const uint8_t *labels,
                                     size_t n,
                                     double *out);

/**
 * Fit a Gaussian density detector on training windows.
 *
 * # Safety
 * `data` must hold `n_windows * window_length * n_features` doubles;
 * `out` must be valid. Free the handle with [`sb_detector_free`].
 */
enum SbStatus sb_gde_fit(const double *data,
                         size_t n_windows,
                         size_t window_length,
                         size_t n_features,
                         enum SbGdeMode mode,
                         double epsilon,
                         struct SbDetector **out);

/**
 * Fit a linear autoencoder detector on training windows.
 *
 * # Safety
 * As [`sb_gde_fit`].
 */
enum SbStatus sb_mlprec_fit(const double *data,
                            size_t n_windows,
                            size_t window_length,
                            size_t n_features,
                            size_t hidden,
                            size_t epochs,
                            double learning_rate,
                            uint64_t seed,
                            struct SbDetector **out);

/**
 * Load a persisted model. `expected_dataset` may be NULL to skip the
 * dataset fingerprint check.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum SbStatus sb_detector_load(const char *path,
                               const char *expected_dataset,
                               struct SbDetector **out);

/**
 * # Safety
 * `det` must be a live handle; `path` a NUL-terminated string.
 */
enum SbStatus sb_detector_save(const struct SbDetector *det, const char *path);

/**
 * Score windows; writes `n_windows` scores (higher = more anomalous).
 *
 * # Safety
 * `det` must be a live handle; `data` as in [`sb_gde_fit`]; `out_scores`
 * must hold `n_windows` doubles.
 */
enum SbStatus sb_detector_score(const struct SbDetector *det,
                                const double *data,
                                size_t n_windows,
                                size_t window_length,
                                size_t n_features,
                                double *out_scores);

/**
 * Hex fingerprint of every model parameter.
 *
 * # Safety
 * `det` must be a live handle; `buf` must hold `len` bytes; `needed` may
 * be NULL.
 */
enum SbStatus sb_detector_fingerprint(const struct SbDetector *det,
                                      char *buf,
                                      size_t len,
                                      size_t *needed);

/**
 * # Safety
 * `det` must be NULL or a handle not yet freed.
 */
void sb_detector_free(struct SbDetector *det);

/**
 * Apply a calibrated stress spec (JSON with a matching calibration id)
 * to windows, writing the stressed tensor to `out`.
 *
 * # Safety
 * `spec_json` must be NUL-terminated; `data` and `out` must each hold
 * `n_windows * window_length * n_features` doubles.
 */
enum SbStatus sb_stress_apply(const char *spec_json,
                              const double *data,
                              size_t n_windows,
                              size_t window_length,
                              size_t n_features,
                              double *out);

/**
 * Validate a config file. `n_errors` receives the error count; the
 * status is `Validation` when it is non-zero.
 *
 * # Safety
 * `config_path` must be NUL-terminated; `n_errors` may be NULL.
 */
enum SbStatus sb_validate_config(const char *config_path, size_t *n_errors);

/**
 * Run an experiment config end to end. `output_root` may be NULL to use
 * the default; `workers` 0 uses all cores.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be valid. Free the result
 * with [`sb_result_free`].
 */
enum SbStatus sb_run_experiment(const char *config_path,
                                const char *output_root,
                                size_t workers,
                                struct SbRunResult **out);

/**
 * Window F1 of the clean baseline.
 *
 * # Safety
 * `res` must be a live handle; `out` valid.
 */
enum SbStatus sb_result_clean_f1(const struct SbRunResult *res, double *out);

/**
 * Number of stress cells (excluding the clean baseline).
 *
 * # Safety
 * `res` must be a live handle; `out` valid.
 */
enum SbStatus sb_result_cell_count(const struct SbRunResult *res, size_t *out);

/**
 * The full result as JSON, owned by the handle.
 *
 * # Safety
 * `res` must be a live handle. The string lives until [`sb_result_free`].
 */
const char *sb_result_json(const struct SbRunResult *res);

/**
 * Run directory path.
 *
 * # Safety
 * `res` must be a live handle; `buf` must hold `len` bytes; `needed` may
 * be NULL.
 */
enum SbStatus sb_result_run_dir(const struct SbRunResult *res,
                                char *buf,
                                size_t len,
                                size_t *needed);

/**
 * # Safety
 * `res` must be NULL or a handle not yet freed.
 */
void sb_result_free(struct SbRunResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STRESSBENCH_H */
