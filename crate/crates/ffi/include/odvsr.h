#ifndef ODVSR_H
#define ODVSR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum OdvsrStatus {
  ODVSR_STATUS_OK = 0,
  ODVSR_STATUS_NULL_POINTER = 1,
  ODVSR_STATUS_INVALID_ARGUMENT = 2,
  ODVSR_STATUS_SHAPE = 3,
  ODVSR_STATUS_FORMAT = 4,
  ODVSR_STATUS_CHECKPOINT = 5,
  ODVSR_STATUS_IO = 6,
  ODVSR_STATUS_BUFFER_TOO_SMALL = 7,
  ODVSR_STATUS_INTERNAL = 8,
  ODVSR_STATUS_PANIC = 9,
} OdvsrStatus;

/**
 * Opaque upscaler: a network or an interpolation baseline.
 */
typedef struct OdvsrModel OdvsrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next odvsr call on the same thread.
 */
const char *odvsr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *odvsr_version(void);

/**
 * Creates a freshly initialized network (`ffcir`, `cspsr`, `vacv`, `athena`,
 * `fsrcnn`) or an interpolator (`bicubic`, `lanczos`).
 *
 * # Safety
 * `arch` must be a NUL-terminated string; `model` must be writable.
 */
enum OdvsrStatus odvsr_model_new(const char *arch,
                                 uint32_t scale,
                                 uint64_t seed,
                                 struct OdvsrModel **model);

/**
 * Loads a network checkpoint from `len` bytes at `data`.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `model` must be writable.
 */
enum OdvsrStatus odvsr_model_load(const uint8_t *data, size_t len, struct OdvsrModel **model);

/**
 * Loads a network checkpoint from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `model` must be writable.
 */
enum OdvsrStatus odvsr_model_load_file(const char *path, struct OdvsrModel **model);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from one of the constructors and not be freed twice.
 */
void odvsr_model_free(struct OdvsrModel *model);

/**
 * Upscaling factor of the handle, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uint32_t odvsr_model_scale(const struct OdvsrModel *model);

/**
 * Upscales an interleaved RGB8 frame. `dst` must hold
 * `3 * scale * width * scale * height` bytes.
 *
 * # Safety
 * `src` must point to `3 * width * height` readable bytes and `dst` to
 * `dst_len` writable bytes that do not overlap `src`.
 */
enum OdvsrStatus odvsr_model_upscale_rgb8(const struct OdvsrModel *model,
                                          const uint8_t *src,
                                          uint32_t width,
                                          uint32_t height,
                                          uint8_t *dst,
                                          size_t dst_len);

/**
 * Median seconds per forward pass on a mid-grey `width x height` input.
 *
 * # Safety
 * `model` must be a live handle; `median_s` must be writable.
 */
enum OdvsrStatus odvsr_model_measure_runtime(const struct OdvsrModel *model,
                                             uint32_t width,
                                             uint32_t height,
                                             uint32_t warmup,
                                             uint32_t repetitions,
                                             double *median_s);

/**
 * WS-PSNR in dB between two 8-bit equirectangular planes (peak 255).
 * Identical planes give +infinity.
 *
 * # Safety
 * Both planes must point to `width * height` readable bytes; `out_db` must
 * be writable.
 */
enum OdvsrStatus odvsr_ws_psnr_u8(const uint8_t *reference,
                                  const uint8_t *test,
                                  uint32_t width,
                                  uint32_t height,
                                  double *out_db);

/**
 * Latitude-weighted SSIM between two 8-bit equirectangular planes.
 *
 * # Safety
 * As for [`odvsr_ws_psnr_u8`].
 */
enum OdvsrStatus odvsr_ws_ssim_u8(const uint8_t *reference,
                                  const uint8_t *test,
                                  uint32_t width,
                                  uint32_t height,
                                  double *out_ssim);

/**
 * Challenge score Q in `[0, 100]` with the published constants of the
 * given track (2 or 4).
 *
 * # Safety
 * `out_q` must be writable.
 */
enum OdvsrStatus odvsr_q_score(double ws_psnr_db, double runtime_s, uint32_t track, double *out_q);

/**
 * Runtime factor of the given track: 1 up to the threshold,
 * `exp(B * (threshold - runtime))` beyond it.
 *
 * # Safety
 * `out_factor` must be writable.
 */
enum OdvsrStatus odvsr_runtime_score(double runtime_s, uint32_t track, double *out_factor);

/**
 * Bjøntegaard delta bitrate (percent) and delta quality (dB) of `test`
 * against `anchor`, four rate points each. Either output may be NULL.
 *
 * # Safety
 * Each array must hold `n` readable values.
 */
enum OdvsrStatus odvsr_bd_rate(const double *anchor_rates,
                               const double *anchor_quality,
                               const double *test_rates,
                               const double *test_quality,
                               size_t n,
                               double *out_bd_rate_pct,
                               double *out_bd_quality_db);

/**
 * Creates a handle that sleeps `delay_ms` per frame and returns black.
 *
 * # Safety
 * `model` must be writable.
 */
enum OdvsrStatus odvsr_model_new_sleep_stub(uint32_t scale,
                                            uint32_t delay_ms,
                                            struct OdvsrModel **model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ODVSR_H */
