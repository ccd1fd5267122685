#ifndef NNSE_H
#define NNSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NnseAttackOutcome {
  NNSE_ATTACK_OUTCOME_FOUND = 0,
  NNSE_ATTACK_OUTCOME_NONE_WITHIN_BUDGET = 1,
  NNSE_ATTACK_OUTCOME_PROVEN_ROBUST = 2,
} NnseAttackOutcome;

/**
 * Result of every fallible call.
 */
typedef enum NnseStatus {
  NNSE_STATUS_OK = 0,
  NNSE_STATUS_NULL_POINTER = 1,
  NNSE_STATUS_INVALID_UTF8 = 2,
  NNSE_STATUS_MISSING_FILE = 3,
  /**
   * Malformed JSON, CSV or parameter data.
   */
  NNSE_STATUS_MALFORMED_INPUT = 4,
  NNSE_STATUS_SHAPE_MISMATCH = 5,
  NNSE_STATUS_INVALID_ARGUMENT = 6,
  NNSE_STATUS_BUFFER_TOO_SMALL = 7,
  NNSE_STATUS_INTERNAL = 8,
  NNSE_STATUS_PANIC = 9,
} NnseStatus;

/**
 * Opaque loaded model.
 */
typedef struct NnseModel NnseModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads the model stored in directory `dir` (UTF-8, NUL-terminated) and
 * stores a new handle in `*out`.
 *
 * # Safety
 * `dir` must be a valid C string and `out` a valid pointer.
 */
enum NnseStatus nnse_model_load(const char *dir, struct NnseModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`nnse_model_load`] and not be used afterwards.
 */
void nnse_model_free(struct NnseModel *model);

/**
 * Number of input values (product of the input shape), or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nnse_model_input_len(const struct NnseModel *model);

/**
 * Number of output classes, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nnse_model_num_classes(const struct NnseModel *model);

/**
 * Runs the network on `input` (row-major, channels last). Writes the
 * pre-softmax logits to `logits` (`logits_len >= num_classes`) and the
 * label to `*label`.
 *
 * # Safety
 * Pointers must be valid for the given lengths; `label` must be valid.
 */
enum NnseStatus nnse_forward(const struct NnseModel *model,
                             const double *input,
                             size_t input_len,
                             double *logits,
                             size_t logits_len,
                             size_t *label);

/**
 * Searches for a value of one input position in `[lower, upper]` that
 * changes the label, within `timeout_secs`. `position` holds `rank`
 * indices. On `Found`, the adversarial input is written to `adversarial`
 * (`input_len` values) and its label to `*new_label`; otherwise both are
 * left untouched.
 *
 * # Safety
 * Pointers must be valid for the given lengths; `outcome`, `adversarial`
 * and `new_label` must be valid.
 */
enum NnseStatus nnse_attack_pixel(const struct NnseModel *model,
                                  const double *input,
                                  size_t input_len,
                                  const size_t *position,
                                  size_t rank,
                                  double lower,
                                  double upper,
                                  double timeout_secs,
                                  enum NnseAttackOutcome *outcome,
                                  double *adversarial,
                                  size_t *new_label);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call on this thread.
 */
const char *nnse_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *nnse_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NNSE_H */
