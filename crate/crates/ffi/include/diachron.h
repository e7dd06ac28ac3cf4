#ifndef DIACHRON_H
#define DIACHRON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every call.
 */
typedef enum DiachronStatus {
  DIACHRON_STATUS_OK = 0,
  DIACHRON_STATUS_NULL_POINTER = 1,
  DIACHRON_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad arguments or configuration.
   */
  DIACHRON_STATUS_CONFIG = 3,
  /**
   * Unreadable, corrupt or mismatched model files.
   */
  DIACHRON_STATUS_DATA = 4,
  /**
   * Undefined or failed computation, e.g. a zero vector.
   */
  DIACHRON_STATUS_NUMERIC = 5,
  DIACHRON_STATUS_UNKNOWN_WORD = 6,
  /**
   * The month has no trained slice.
   */
  DIACHRON_STATUS_UNKNOWN_MONTH = 7,
  DIACHRON_STATUS_BUFFER_TOO_SMALL = 8,
  DIACHRON_STATUS_PANIC = 9,
} DiachronStatus;

/**
 * Opaque model handle.
 */
typedef struct DiachronModel DiachronModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or NULL after a successful call.
 * Valid until the next call on the same thread.
 */
const char *diachron_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *diachron_version(void);

/**
 * Loads a model directory written by the `diachron` tool.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DiachronStatus diachron_model_load(const char *dir, struct DiachronModel **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`diachron_model_load`] and not be used again.
 */
void diachron_model_free(struct DiachronModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum DiachronStatus diachron_model_vocab_size(const struct DiachronModel *model, size_t *out);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum DiachronStatus diachron_model_dim(const struct DiachronModel *model, size_t *out);

/**
 * Trained months in increasing order. `len` receives the number of months
 * even when `cap` is too small.
 *
 * # Safety
 * `months` must hold `cap` elements; `len` must be valid.
 */
enum DiachronStatus diachron_model_months(const struct DiachronModel *model,
                                          uint32_t *months,
                                          size_t cap,
                                          size_t *len);

/**
 * Copies a word's vector at `month` into `buf`; `len` receives the
 * dimension.
 *
 * # Safety
 * `word` must be NUL-terminated, `buf` must hold `cap` doubles and `len`
 * must be valid.
 */
enum DiachronStatus diachron_model_word_vector(const struct DiachronModel *model,
                                               const char *word,
                                               uint32_t month,
                                               double *buf,
                                               size_t cap,
                                               size_t *len);

/**
 * Cosine similarity of two words at `month`.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated and `out` valid.
 */
enum DiachronStatus diachron_model_similarity(const struct DiachronModel *model,
                                              const char *a,
                                              const char *b,
                                              uint32_t month,
                                              double *out);

/**
 * Change of `word` from `month` to the next trained month, one minus the
 * cosine of the two vectors.
 *
 * # Safety
 * `word` must be NUL-terminated and `out` valid.
 */
enum DiachronStatus diachron_model_semantic_change(const struct DiachronModel *model,
                                                   const char *word,
                                                   uint32_t month,
                                                   double *out);

/**
 * Spearman rank correlation of two arrays of length `n`, ties given their
 * average rank.
 *
 * # Safety
 * `x` and `y` must each point to `n` doubles; `out` must be valid.
 */
enum DiachronStatus diachron_spearman(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIACHRON_H */
