#ifndef CLSEG_H
#define CLSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ClsegStatus {
  CLSEG_STATUS_OK = 0,
  CLSEG_STATUS_NULL_POINTER = 1,
  CLSEG_STATUS_SHAPE = 2,
  CLSEG_STATUS_CONFIG = 3,
  CLSEG_STATUS_DOMAIN = 4,
  CLSEG_STATUS_CONTRACT = 5,
  CLSEG_STATUS_STATE = 6,
  CLSEG_STATUS_TRAINING = 7,
  CLSEG_STATUS_USAGE = 8,
  CLSEG_STATUS_FORMAT = 9,
  CLSEG_STATUS_MISMATCH = 10,
  CLSEG_STATUS_IO = 11,
  CLSEG_STATUS_INVALID_UTF8 = 12,
  CLSEG_STATUS_PANIC = 13,
} ClsegStatus;

/**
 * Opaque model handle.
 */
typedef struct ClsegModel ClsegModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next `clseg_*` call on the same thread.
 */
const char *clseg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *clseg_version(void);

/**
 * Builds a freshly initialized model. `residual` is 0 or 1.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum ClsegStatus clseg_model_new(size_t levels,
                                 size_t base_features,
                                 size_t spatial_rank,
                                 size_t in_channels,
                                 int32_t residual,
                                 size_t patch_extent,
                                 uint64_t seed,
                                 struct ClsegModel **out);

/**
 * Releases a handle; NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void clseg_model_free(struct ClsegModel *model);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum ClsegStatus clseg_model_parameter_count(const struct ClsegModel *model, size_t *out);

/**
 * Runs inference on a `[N, C, spatial..]` batch given by `shape[0..rank]`.
 * Writes the soft mask `[N, 1, spatial..]` into `out`, which must hold
 * `out_len` values.
 *
 * # Safety
 * `input` must hold the product of `shape` values; `out` must hold
 * `out_len` values.
 */
enum ClsegStatus clseg_model_predict(const struct ClsegModel *model,
                                     const double *input,
                                     const size_t *shape,
                                     size_t rank,
                                     double *out,
                                     size_t out_len);

/**
 * # Safety
 * `model` must be a valid handle and `path` a NUL-terminated string.
 */
enum ClsegStatus clseg_model_save(const struct ClsegModel *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ClsegStatus clseg_model_load(const char *path, struct ClsegModel **out);

/**
 * Hard Dice between `pred` and `target` binarized at `threshold`.
 *
 * # Safety
 * `pred` and `target` must hold `len` values; `out` must be valid.
 */
enum ClsegStatus clseg_dice_score(const double *pred,
                                  const double *target,
                                  size_t len,
                                  double threshold,
                                  double *out);

/**
 * Soft Dice loss `1 - (2Σpg + ε) / (Σp² + Σg² + ε)`.
 *
 * # Safety
 * `pred` and `target` must hold `len` values; `out` must be valid.
 */
enum ClsegStatus clseg_dice_loss(const double *pred,
                                 const double *target,
                                 size_t len,
                                 double eps,
                                 double *out);

/**
 * Backward transfer of a row-major `k`×`k` result matrix. Writes the
 * average to `average` and `k - 1` per-domain values to `per_domain`
 * (which may be NULL when `k == 1`).
 *
 * # Safety
 * `r` must hold `k * k` values and `per_domain` `k - 1` values.
 */
enum ClsegStatus clseg_compute_bwt(const double *r, size_t k, double *average, double *per_domain);

/**
 * `base_lr · gamma^floor(epoch / step)`.
 */
double clseg_lr_schedule(size_t epoch, double base_lr, size_t step, double gamma);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLSEG_H */
