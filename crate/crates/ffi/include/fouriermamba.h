#ifndef FOURIERMAMBA_H
#define FOURIERMAMBA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_ARGUMENT = 2,
  FM_STATUS_SHAPE = 3,
  FM_STATUS_NOT_POWER_OF_TWO = 4,
  FM_STATUS_NON_FINITE = 5,
  FM_STATUS_FORMAT = 6,
  FM_STATUS_CONFIG = 7,
  FM_STATUS_IO = 8,
  FM_STATUS_IMAGE = 9,
  FM_STATUS_PANIC = 10,
} FmStatus;

/**
 * A scan order: a list of `(row, col)` positions.
 */
typedef struct FmScanOrder FmScanOrder;

/**
 * Model weights.
 */
typedef struct FmWeights FmWeights;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The most recent error message on this thread, or NULL if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *fm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fm_version(void);

/**
 * Fresh weights for a named preset (`"toy"`, `"minimal"` or `"full"`).
 *
 * # Safety
 * `preset` must be a NUL-terminated string; `out` must be writable.
 */
enum FmStatus fm_weights_init(const char *preset, uint64_t seed, struct FmWeights **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FmStatus fm_weights_load(const char *path, struct FmWeights **out);

/**
 * # Safety
 * `weights` must come from this library; `path` must be NUL-terminated.
 */
enum FmStatus fm_weights_save(const struct FmWeights *weights, const char *path);

/**
 * Smallest image side the weights accept after padding.
 *
 * # Safety
 * `weights` must come from this library; `out` must be writable.
 */
enum FmStatus fm_weights_min_side(const struct FmWeights *weights, size_t *out);

/**
 * # Safety
 * `weights` must be NULL or come from this library, and not be used after.
 */
void fm_weights_free(struct FmWeights *weights);

/**
 * Derains an `H x W x 3` image of any size into `out` (same size). The
 * image is reflection-padded to a power of two and cropped back.
 *
 * # Safety
 * `input` and `out` must each hold `h * w * 3` doubles.
 */
enum FmStatus fm_derain(const struct FmWeights *weights,
                        const double *input,
                        size_t h,
                        size_t w,
                        double *out);

/**
 * PSNR of the luma channels, in dB. Identical images give +infinity.
 *
 * # Safety
 * `a` and `b` must each hold `h * w * 3` doubles; `out` must be writable.
 */
enum FmStatus fm_psnr_y(const double *a, const double *b, size_t h, size_t w, double *out);

/**
 * Mean SSIM of the luma channels. Needs `h, w >= 11`.
 *
 * # Safety
 * `a` and `b` must each hold `h * w * 3` doubles; `out` must be writable.
 */
enum FmStatus fm_ssim_y(const double *a, const double *b, size_t h, size_t w, double *out);

/**
 * Builds the scan `variant` (e.g. `"progressive-zigzag"`) over an `h x w`
 * grid. Spectral variants visit only the Hermitian half.
 *
 * # Safety
 * `variant` must be NUL-terminated; `out` must be writable.
 */
enum FmStatus fm_scan_order_new(const char *variant, size_t h, size_t w, struct FmScanOrder **out);

/**
 * # Safety
 * `order` must come from this library; `out` must be writable.
 */
enum FmStatus fm_scan_order_len(const struct FmScanOrder *order, size_t *out);

/**
 * Copies the visiting order into `rows` and `cols`, which hold `capacity`
 * entries each. Fails with `InvalidArgument` when `capacity` is too small.
 *
 * # Safety
 * `rows` and `cols` must each hold `capacity` values.
 */
enum FmStatus fm_scan_order_coords(const struct FmScanOrder *order,
                                   size_t *rows,
                                   size_t *cols,
                                   size_t capacity);

/**
 * # Safety
 * `order` must be NULL or come from this library, and not be used after.
 */
void fm_scan_order_free(struct FmScanOrder *order);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOURIERMAMBA_H */
