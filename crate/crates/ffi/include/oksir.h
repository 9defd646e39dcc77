#ifndef OKSIR_H
#define OKSIR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OksirKernel {
  OKSIR_KERNEL_ADDITIVE_GAUSSIAN = 0,
  OKSIR_KERNEL_GAUSSIAN_RBF = 1,
} OksirKernel;

/**
 * Result of every fallible call.
 */
typedef enum OksirStatus {
  OKSIR_STATUS_OK = 0,
  OKSIR_STATUS_NULL_POINTER = 1,
  OKSIR_STATUS_INVALID_ARGUMENT = 2,
  OKSIR_STATUS_STATE = 3,
  OKSIR_STATUS_NUMERICAL = 4,
  OKSIR_STATUS_FORMAT = 5,
  OKSIR_STATUS_IO = 6,
  OKSIR_STATUS_PANIC = 7,
} OksirStatus;

/**
 * Opaque model handle.
 */
typedef struct OksirModel OksirModel;

/**
 * Construction options. Start from `oksir_options_default()` and override fields.
 */
typedef struct OksirOptions {
  /**
   * Number of directions.
   */
  size_t d;
  /**
   * Number of slices when cut-points are learned from a warm-up buffer.
   */
  size_t num_slices;
  enum OksirKernel kernel;
  double sigma;
  /**
   * ALD threshold; NaN selects 1% of `k(x, x)` of the first sample.
   */
  double nu;
  uint64_t seed;
  bool center;
  /**
   * Optional explicit cut-points (`n_cutpoints` entries, ascending). NULL learns them.
   */
  const double *cutpoints;
  size_t n_cutpoints;
  /**
   * Step `t0` after which the learning rate is fixed at `eta`; 0 keeps `1/t` forever.
   */
  uint64_t eta_t0;
  double eta;
} OksirOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library defaults: two directions, ten slices, additive Gaussian kernel with σ = 2,
 * data-driven ν, seed 42, centering on, learning rate `1/t` then 0.01 after step 100.
 */
struct OksirOptions oksir_options_default(void);

/**
 * Creates an empty model. On success `*out` owns a handle for `oksir_model_free`.
 *
 * # Safety
 * `options` must point to a valid `OksirOptions` (its `cutpoints`, if not NULL, to
 * `n_cutpoints` readable doubles); `out` must be writable.
 */
enum OksirStatus oksir_model_new(const struct OksirOptions *options, struct OksirModel **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void oksir_model_free(struct OksirModel *model);

/**
 * Feeds one sample. On failure the model is unchanged.
 *
 * # Safety
 * `model` must be a live handle and `x` must point to `p` readable doubles.
 */
enum OksirStatus oksir_model_partial_fit(struct OksirModel *model,
                                         const double *x,
                                         size_t p,
                                         double y);

/**
 * Ends a pending warm-up: sets cut-points from the buffered responses and replays them.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum OksirStatus oksir_model_flush(struct OksirModel *model);

/**
 * Writes the `d` summary statistics of `x` to `out`.
 *
 * # Safety
 * `model` must be a live handle, `x` must point to `p` readable doubles and `out` to
 * `d` writable doubles.
 */
enum OksirStatus oksir_model_transform(const struct OksirModel *model,
                                       const double *x,
                                       size_t p,
                                       double *out,
                                       size_t d);

/**
 * Current dictionary size (0 before the first sample leaves the warm-up buffer).
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum OksirStatus oksir_model_dict_size(const struct OksirModel *model, size_t *out);

/**
 * Number of samples consumed, including any still in the warm-up buffer.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum OksirStatus oksir_model_samples_seen(const struct OksirModel *model, uint64_t *out);

/**
 * Serializes the model. `*out` receives a NUL-terminated string to release with
 * `oksir_string_free`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum OksirStatus oksir_model_save_json(const struct OksirModel *model, char **out);

/**
 * Restores a model from `oksir_model_save_json` output.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum OksirStatus oksir_model_load_json(const char *json, struct OksirModel **out);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a string from this library not yet freed.
 */
void oksir_string_free(char *s);

/**
 * Message of the most recent failure on this thread, or NULL. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *oksir_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OKSIR_H */
