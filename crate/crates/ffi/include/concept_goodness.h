#ifndef CONCEPT_GOODNESS_H
#define CONCEPT_GOODNESS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgStatus {
  CG_STATUS_OK = 0,
  CG_STATUS_NULL_POINTER = 1,
  CG_STATUS_INVALID_ARGUMENT = 2,
  CG_STATUS_DEGENERATE = 3,
  CG_STATUS_PANIC = 4,
} CgStatus;

typedef enum CgBucket {
  CG_BUCKET_BAD = 0,
  CG_BUCKET_MODERATE = 1,
  CG_BUCKET_GOOD = 2,
} CgBucket;

typedef enum CgLevel {
  CG_LEVEL_NOMINAL = 0,
  CG_LEVEL_ORDINAL = 1,
} CgLevel;

/**
 * Opaque rating matrix.
 */
typedef struct CgRatingMatrix CgRatingMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *cg_last_error_message(void);

/**
 * Brevity factor `1 - word_count / max_word_count`.
 *
 * # Safety
 * `out` must be NULL or point to writable storage for one double.
 */
enum CgStatus cg_brevity_score(uint32_t word_count, uint32_t max_word_count, double *out);

/**
 * Frequency factor `ln(1 + count) / ln(1 + max_count)`.
 *
 * # Safety
 * `out` must be NULL or point to writable storage for one double.
 */
enum CgStatus cg_frequency_score(uint64_t count, uint64_t max_count, double *out);

/**
 * German language mappability from English and German word counts.
 *
 * # Safety
 * `out` must be NULL or point to writable storage for one double.
 */
enum CgStatus cg_glm_score(uint32_t source_word_count,
                           uint32_t translated_word_count,
                           bool has_compound,
                           double *out);

/**
 * Weighted mean of four factors (Br, FO, GLM, DP) under four integer
 * weights in `0..=100`, not all zero.
 *
 * # Safety
 * `factors` and `weights` must each be NULL or point to four readable
 * elements; `out` must be NULL or point to writable storage for one double.
 */
enum CgStatus cg_goodness(const double *factors, const uint32_t *weights, double *out);

/**
 * Maps a five-level rating (1-5) to a bucket.
 *
 * # Safety
 * `out` must be NULL or point to writable storage for one `CgBucket`.
 */
enum CgStatus cg_map_rating(uint8_t level, enum CgBucket *out);

/**
 * New empty rating matrix; free it with [`cg_rating_matrix_free`].
 */
struct CgRatingMatrix *cg_rating_matrix_new(void);

/**
 * Stores (or overwrites) one rater's bucket for one item.
 *
 * # Safety
 * `matrix` must come from [`cg_rating_matrix_new`] and not be freed;
 * `rater` and `cui` must be NUL-terminated UTF-8 strings.
 */
enum CgStatus cg_rating_matrix_set(struct CgRatingMatrix *matrix,
                                   const char *rater,
                                   const char *cui,
                                   enum CgBucket bucket);

/**
 * Krippendorff's alpha over the matrix. Returns `CG_STATUS_DEGENERATE`
 * when alpha is undefined.
 *
 * # Safety
 * `matrix` must come from [`cg_rating_matrix_new`] and not be freed; `out`
 * must be NULL or point to writable storage for one double.
 */
enum CgStatus cg_rating_matrix_alpha(const struct CgRatingMatrix *matrix,
                                     enum CgLevel level,
                                     double *out);

/**
 * Releases a matrix. NULL is ignored.
 *
 * # Safety
 * `matrix` must be NULL or come from [`cg_rating_matrix_new`], and must
 * not be used afterwards.
 */
void cg_rating_matrix_free(struct CgRatingMatrix *matrix);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONCEPT_GOODNESS_H */
