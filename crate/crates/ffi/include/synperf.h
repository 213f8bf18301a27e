/* C interface for the synperf GPU latency prediction toolkit. */

#pragma once

/* Generated with cbindgen:0.26.0 */

/* Generated by cbindgen from the synperf-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call. Anything but `Ok` leaves a
 * thread-local message behind [`synperf_last_error`].
 */
typedef enum SynperfStatus {
  SYNPERF_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  SYNPERF_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SYNPERF_STATUS_INVALID_UTF8 = 2,
  /**
   * The operating system refused a file operation.
   */
  SYNPERF_STATUS_IO_ERROR = 3,
  /**
   * A file or JSON argument did not have the expected shape.
   */
  SYNPERF_STATUS_PARSE_ERROR = 4,
  /**
   * Inputs were well-formed but semantically invalid.
   */
  SYNPERF_STATUS_VALIDATION_ERROR = 5,
  /**
   * The combination of kernel, precision, and hardware is not modeled.
   */
  SYNPERF_STATUS_UNSUPPORTED = 6,
  /**
   * A failure inside the library itself.
   */
  SYNPERF_STATUS_INTERNAL_ERROR = 7,
} SynperfStatus;

/**
 * A trained per-category efficiency model (opaque).
 */
typedef struct SynperfEstimator SynperfEstimator;

/**
 * A loaded hardware description (opaque).
 */
typedef struct SynperfHwSpec SynperfHwSpec;

/**
 * A kernel tile-geometry table (opaque).
 */
typedef struct SynperfTiling SynperfTiling;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *synperf_version(void);

/**
 * Message of the most recent failure on the calling thread, or an empty
 * string when nothing failed yet. The pointer stays valid until the next
 * failing synperf call on the same thread; do not free it.
 */
const char *synperf_last_error(void);

/**
 * Release a string previously returned through an out-pointer.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from a synperf out-string, not yet
 * freed.
 */
void synperf_string_free(char *s);

/**
 * Load a hardware spec from a JSON file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * writable pointer. On success `*out` owns the spec until
 * [`synperf_hwspec_free`].
 */
enum SynperfStatus synperf_hwspec_load(const char *path, struct SynperfHwSpec **out);

/**
 * Name of a loaded hardware spec, as a new string owned by the caller.
 *
 * # Safety
 * `spec` must be a live handle from [`synperf_hwspec_load`]; `out` must be a
 * valid writable pointer.
 */
enum SynperfStatus synperf_hwspec_name(const struct SynperfHwSpec *spec, char **out);

/**
 * Release a hardware spec handle. NULL is a no-op.
 *
 * # Safety
 * `spec` must be NULL or a live handle from [`synperf_hwspec_load`], not yet
 * freed.
 */
void synperf_hwspec_free(struct SynperfHwSpec *spec);

/**
 * Load a tiling table from a JSON file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * writable pointer. On success `*out` owns the table until
 * [`synperf_tiling_free`].
 */
enum SynperfStatus synperf_tiling_load(const char *path, struct SynperfTiling **out);

/**
 * The compiled-in default tiling table.
 *
 * # Safety
 * `out` must be a valid writable pointer. On success `*out` owns the table
 * until [`synperf_tiling_free`].
 */
enum SynperfStatus synperf_tiling_builtin(struct SynperfTiling **out);

/**
 * Release a tiling table handle. NULL is a no-op.
 *
 * # Safety
 * `tiling` must be NULL or a live handle, not yet freed.
 */
void synperf_tiling_free(struct SynperfTiling *tiling);

/**
 * Load a trained estimator from a JSON model file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * writable pointer. On success `*out` owns the estimator until
 * [`synperf_estimator_free`].
 */
enum SynperfStatus synperf_estimator_load(const char *path, struct SynperfEstimator **out);

/**
 * Release an estimator handle. NULL is a no-op.
 *
 * # Safety
 * `est` must be NULL or a live handle, not yet freed.
 */
void synperf_estimator_free(struct SynperfEstimator *est);

/**
 * Analyze one kernel invocation and return its feature vector as JSON:
 * `{"category", "hardware", "precision", "names", "values",
 * "theoretical_time_us", "imbalance_ratio"}` — the same shape the CLI's
 * `features --json` prints.
 *
 * `category` is a kernel token such as `"gemm"`; `params_json` holds the
 * category's shape parameters as a JSON object; `precision` may be NULL for
 * the category default.
 *
 * # Safety
 * Handles must be live; string arguments NUL-terminated; `out_json` a valid
 * writable pointer. On success `*out_json` is owned by the caller.
 */
enum SynperfStatus synperf_features_json(const struct SynperfHwSpec *spec,
                                         const struct SynperfTiling *tiling,
                                         const char *category,
                                         const char *precision,
                                         const char *params_json,
                                         char **out_json);

/**
 * Predict one kernel's latency with a trained estimator.
 *
 * The kernel category comes from the estimator. Writes the predicted latency
 * in microseconds and, when `out_efficiency` is non-NULL, the predicted
 * efficiency in (0, 1).
 *
 * # Safety
 * Handles must be live; string arguments NUL-terminated; `out_latency_us`
 * a valid writable pointer.
 */
enum SynperfStatus synperf_predict_kernel(const struct SynperfEstimator *est,
                                          const struct SynperfHwSpec *spec,
                                          const struct SynperfTiling *tiling,
                                          const char *precision,
                                          const char *params_json,
                                          double *out_latency_us,
                                          double *out_efficiency);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
