/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ALTREC_H
#define ALTREC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AltrecStatus {
  ALTREC_STATUS_OK = 0,
  ALTREC_STATUS_NULL_POINTER = 1,
  ALTREC_STATUS_INVALID_ARGUMENT = 2,
  ALTREC_STATUS_IO = 3,
  ALTREC_STATUS_FORMAT = 4,
  ALTREC_STATUS_UNKNOWN_PRODUCT = 5,
  ALTREC_STATUS_DIM_MISMATCH = 6,
  ALTREC_STATUS_NUMERICAL = 7,
  ALTREC_STATUS_STALE_ARTIFACT = 8,
  ALTREC_STATUS_INTERNAL = 9,
} AltrecStatus;

/**
 * Nearest-neighbor index over a store.
 */
typedef struct AltrecIndex AltrecIndex;

/**
 * Ranked `(product id, similarity)` list from a query.
 */
typedef struct AltrecResults AltrecResults;

/**
 * Loaded embedding store.
 */
typedef struct AltrecStore AltrecStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *altrec_version(void);

/**
 * Message of the last failed call on this thread, or NULL if none.
 */
const char *altrec_last_error(void);

/**
 * Loads a binary embedding store written by `altrec embed`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AltrecStatus altrec_store_load(const char *path, struct AltrecStore **out);

/**
 * # Safety
 * `store` must be NULL or a handle from `altrec_store_load` not yet freed.
 */
void altrec_store_free(struct AltrecStore *store);

/**
 * Number of products in the store; 0 for NULL.
 *
 * # Safety
 * `store` must be NULL or a live store handle.
 */
size_t altrec_store_len(const struct AltrecStore *store);

/**
 * Vector dimension; 0 for NULL.
 *
 * # Safety
 * `store` must be NULL or a live store handle.
 */
size_t altrec_store_dim(const struct AltrecStore *store);

/**
 * Copies the vector of `product_id` into `buf`, which must hold `buf_len`
 * values and `buf_len` must equal the store dimension.
 *
 * # Safety
 * Pointers must be valid; `buf` must have room for `buf_len` doubles.
 */
enum AltrecStatus altrec_store_get(const struct AltrecStore *store,
                                   const char *product_id,
                                   double *buf,
                                   size_t buf_len);

/**
 * Builds an index over every vector of `store`.
 *
 * # Safety
 * `store` must be a live store handle; `out` must be writable.
 */
enum AltrecStatus altrec_index_build(const struct AltrecStore *store,
                                     size_t m,
                                     size_t ef_construction,
                                     size_t ef_search,
                                     uint64_t seed,
                                     struct AltrecIndex **out);

/**
 * Loads an index file and checks it was built from `store`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `store` a live handle and `out`
 * writable.
 */
enum AltrecStatus altrec_index_load(const char *path,
                                    const struct AltrecStore *store,
                                    struct AltrecIndex **out);

/**
 * # Safety
 * `index` must be a live handle and `path` a NUL-terminated string.
 */
enum AltrecStatus altrec_index_save(const struct AltrecIndex *index, const char *path);

/**
 * # Safety
 * `index` must be NULL or a handle not yet freed.
 */
void altrec_index_free(struct AltrecIndex *index);

/**
 * Approximate `k` nearest neighbors of `query` (length `dim`) by cosine
 * similarity, most similar first.
 *
 * # Safety
 * `query` must point to `dim` doubles; `index` must be live; `out` writable.
 */
enum AltrecStatus altrec_index_knn(const struct AltrecIndex *index,
                                   const double *query,
                                   size_t dim,
                                   size_t k,
                                   size_t ef_search,
                                   struct AltrecResults **out);

/**
 * Up to `n` alternatives to `anchor_id` with similarity at least
 * `threshold`, excluding the anchor itself.
 *
 * # Safety
 * Handles must be live, `anchor_id` NUL-terminated and `out` writable.
 */
enum AltrecStatus altrec_recommend(const struct AltrecIndex *index,
                                   const struct AltrecStore *store,
                                   const char *anchor_id,
                                   size_t n,
                                   double threshold,
                                   size_t ef_search,
                                   struct AltrecResults **out);

/**
 * Number of entries; 0 for NULL.
 *
 * # Safety
 * `results` must be NULL or a live handle.
 */
size_t altrec_results_len(const struct AltrecResults *results);

/**
 * Product id of entry `i`, or NULL when out of range.
 *
 * # Safety
 * `results` must be NULL or a live handle.
 */
const char *altrec_results_id(const struct AltrecResults *results, size_t i);

/**
 * Similarity of entry `i`, or NaN when out of range.
 *
 * # Safety
 * `results` must be NULL or a live handle.
 */
double altrec_results_similarity(const struct AltrecResults *results, size_t i);

/**
 * # Safety
 * `results` must be NULL or a handle not yet freed.
 */
void altrec_results_free(struct AltrecResults *results);

/**
 * Cosine similarity of two vectors of length `dim`.
 *
 * # Safety
 * `u` and `v` must each point to `dim` doubles; `out` must be writable.
 */
enum AltrecStatus altrec_cosine_energy(const double *u, const double *v, size_t dim, double *out);

/**
 * Contrastive loss of one pair given its energy and a 0/1 label.
 *
 * # Safety
 * `out` must be writable.
 */
enum AltrecStatus altrec_contrastive_loss(double energy, uint8_t label, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALTREC_H */
