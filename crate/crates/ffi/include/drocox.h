#ifndef DROCOX_H
#define DROCOX_H

/* Generated by cbindgen at build time. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum DrocoxStatus {
  DROCOX_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DROCOX_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  DROCOX_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad input data or configuration.
   */
  DROCOX_STATUS_INVALID_INPUT = 3,
  /**
   * File could not be read or written.
   */
  DROCOX_STATUS_IO = 4,
  /**
   * Numeric failure or aborted training.
   */
  DROCOX_STATUS_NUMERIC = 5,
  /**
   * The requested metric is undefined for this data.
   */
  DROCOX_STATUS_UNDEFINED = 6,
  /**
   * Caller buffer is too small; the message states the required length.
   */
  DROCOX_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * Internal panic; the handle arguments should be considered poisoned.
   */
  DROCOX_STATUS_PANIC = 8,
} DrocoxStatus;

/**
 * Opaque dataset handle.
 */
typedef struct DrocoxDataset DrocoxDataset;

/**
 * Opaque model handle. Keeps the training feature names for checkpoints.
 */
typedef struct DrocoxModel DrocoxModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *drocox_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated)
 * and returns the full message length without the terminator. Returns 0 when
 * there is no error. Pass a null `buf` to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t drocox_last_error(char *buf, size_t cap);

/**
 * Generates a synthetic dataset. `mixture_weights` has `k` entries and
 * `coefficients` is row-major `k × feature_dim`.
 *
 * # Safety
 * Array arguments must be valid for the stated lengths; `out` must be writable.
 */
enum DrocoxStatus drocox_dataset_synthetic(size_t n,
                                           size_t k,
                                           const double *mixture_weights,
                                           const double *coefficients,
                                           size_t feature_dim,
                                           double censoring_rate,
                                           uint64_t seed,
                                           struct DrocoxDataset **out);

/**
 * Loads a CSV. `time_col` and `event_col` may be null for the defaults
 * `time` and `status`; `group_cols` is a comma-separated list or null.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum DrocoxStatus drocox_dataset_load_csv(const char *path,
                                          const char *time_col,
                                          const char *event_col,
                                          const char *group_cols,
                                          struct DrocoxDataset **out);

/**
 * Number of records, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t drocox_dataset_len(const struct DrocoxDataset *ds);

/**
 * Number of feature columns, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t drocox_dataset_n_features(const struct DrocoxDataset *ds);

/**
 * Copies durations and event flags (0/1) into caller arrays of length
 * `drocox_dataset_len`. Either output may be null.
 *
 * # Safety
 * Non-null outputs must be valid for `len` elements.
 */
enum DrocoxStatus drocox_dataset_outcomes(const struct DrocoxDataset *ds,
                                          double *durations,
                                          uint8_t *events,
                                          size_t len);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void drocox_dataset_free(struct DrocoxDataset *ds);

/**
 * Trains a model. `config_json` is a training configuration object (any
 * omitted field takes its default) or null for plain ERM with defaults.
 * `validation` may be null.
 *
 * # Safety
 * Handles must be live; `config_json` null or NUL-terminated; `out` writable.
 */
enum DrocoxStatus drocox_train(const struct DrocoxDataset *train_set,
                               const struct DrocoxDataset *validation,
                               const char *config_json,
                               struct DrocoxModel **out);

/**
 * Writes one risk score f(x) per record of `ds` into `scores`.
 *
 * # Safety
 * Handles must be live; `scores` valid for `len` elements.
 */
enum DrocoxStatus drocox_model_risk_scores(const struct DrocoxModel *model,
                                           const struct DrocoxDataset *ds,
                                           double *scores,
                                           size_t len);

/**
 * Writes a JSON checkpoint.
 *
 * # Safety
 * `model` must be live; `path` NUL-terminated.
 */
enum DrocoxStatus drocox_model_save(const struct DrocoxModel *model, const char *path);

/**
 * Loads a JSON checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum DrocoxStatus drocox_model_load(const char *path, struct DrocoxModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void drocox_model_free(struct DrocoxModel *model);

/**
 * Harrell's concordance index of `scores` against the outcomes; `events`
 * holds 0 or 1 per record.
 *
 * # Safety
 * Arrays must be valid for `n` elements; `out` writable.
 */
enum DrocoxStatus drocox_c_index(const double *scores,
                                 const double *durations,
                                 const uint8_t *events,
                                 size_t n,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DROCOX_H */
