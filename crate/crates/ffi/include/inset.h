#ifndef INSET_H
#define INSET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum InsetStatus {
  INSET_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  INSET_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or inconsistent with the model.
   */
  INSET_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read or written.
   */
  INSET_STATUS_IO = 3,
  /**
   * A file was not in the expected format.
   */
  INSET_STATUS_FORMAT = 4,
  /**
   * A numerical failure, e.g. a non-finite input.
   */
  INSET_STATUS_NUMERICAL = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  INSET_STATUS_INTERNAL = 6,
} InsetStatus;

/**
 * Opaque dataset handle.
 */
typedef struct InsetDatasetHandle InsetDatasetHandle;

/**
 * Opaque model handle.
 */
typedef struct InsetModelHandle InsetModelHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *inset_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *inset_version(void);

/**
 * Creates a randomly initialized model.
 *
 * `variant`: 0 inset, 1 deepsets-only. `mode`: 0 exact, 1 variational,
 * 2 direct; it selects how `inset_model_predict` scores elements.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle pointer.
 */
enum InsetStatus inset_model_new(uint32_t variant,
                                 uint32_t mode,
                                 size_t d,
                                 size_t h,
                                 size_t h_d,
                                 uint64_t seed,
                                 struct InsetModelHandle **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum InsetStatus inset_model_load(const char *path, struct InsetModelHandle **out);

/**
 * Writes the model (without training state) to a checkpoint file.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum InsetStatus inset_model_save(const struct InsetModelHandle *model, const char *path);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void inset_model_free(struct InsetModelHandle *model);

/**
 * Writes the model's feature width and hidden sizes.
 *
 * # Safety
 * `model` must be valid; each output pointer must be writable.
 */
enum InsetStatus inset_model_dims(const struct InsetModelHandle *model,
                                  size_t *d,
                                  size_t *h,
                                  size_t *h_d);

/**
 * Energy `F(S; V)` of the subset `mask` of the ground set `features`.
 *
 * # Safety
 * `features` must hold `n * d` doubles and `mask` `n` bytes.
 */
enum InsetStatus inset_model_energy(const struct InsetModelHandle *model,
                                    const double *features,
                                    size_t n,
                                    size_t d,
                                    const uint8_t *mask,
                                    double *out);

/**
 * EquiNet selection probabilities, one per element, written to `out`.
 *
 * # Safety
 * `features` must hold `n * d` doubles and `out` room for `n`.
 */
enum InsetStatus inset_model_equinet_probs(const struct InsetModelHandle *model,
                                           const double *features,
                                           size_t n,
                                           size_t d,
                                           double *out);

/**
 * Predicted subset of size `n_out`, written as `n` bytes of 0/1.
 *
 * # Safety
 * `features` must hold `n * d` doubles and `out_mask` room for `n` bytes.
 */
enum InsetStatus inset_model_predict(const struct InsetModelHandle *model,
                                     const double *features,
                                     size_t n,
                                     size_t d,
                                     size_t n_out,
                                     uint64_t seed,
                                     uint8_t *out_mask);

/**
 * Loads a binary dataset file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum InsetStatus inset_dataset_load(const char *path, struct InsetDatasetHandle **out);

/**
 * Number of samples in a dataset; 0 for null.
 *
 * # Safety
 * `dataset` must be null or a valid handle.
 */
size_t inset_dataset_len(const struct InsetDatasetHandle *dataset);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `dataset` must be null or a handle from this library not yet freed.
 */
void inset_dataset_free(struct InsetDatasetHandle *dataset);

/**
 * Mean Jaccard coefficient of the model's predictions over a dataset.
 * `fixed_n = 0` keeps `|S*|` elements per sample.
 *
 * # Safety
 * `model` and `dataset` must be valid handles; `out` must be writable.
 */
enum InsetStatus inset_dataset_mjc(const struct InsetModelHandle *model,
                                   const struct InsetDatasetHandle *dataset,
                                   size_t fixed_n,
                                   uint64_t seed,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INSET_H */
