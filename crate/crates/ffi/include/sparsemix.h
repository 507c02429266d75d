#ifndef SPARSEMIX_H
#define SPARSEMIX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Input file layouts accepted by [`sm_dataset_load`].
typedef enum SmFormat {
  SM_FORMAT_SVMLIGHT = 0,
  SM_FORMAT_DENSE_CSV = 1,
} SmFormat;

// Initial partition strategies for [`SmConfig::init`].
typedef enum SmInit {
  SM_INIT_SEEDED = 0,
  SM_INIT_RANDOM = 1,
} SmInit;

typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_POINTER = 1,
  SM_STATUS_IO = 2,
  SM_STATUS_PARSE = 3,
  SM_STATUS_INVALID_ARGUMENT = 4,
  SM_STATUS_EMPTY = 5,
  SM_STATUS_PANIC = 6,
} SmStatus;

typedef struct SmDataset SmDataset;

typedef struct SmResult SmResult;

// Clustering parameters. Fill with [`sm_config_default`] before editing.
typedef struct SmConfig {
  double threshold;
  double beta;
  double epsilon;
  size_t k_init;
  size_t restarts;
  size_t max_iter;
  uint64_t seed;
  // One of [`SmInit`].
  int32_t init;
  bool shuffle;
  bool raw_pseudocode_gain;
} SmConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *sm_last_error(void);

// # Safety
// `out` must be null or point to writable memory for one `SmConfig`.
enum SmStatus sm_config_default(struct SmConfig *out);

// Loads a dataset. `format` is one of [`SmFormat`]; `dim` of 0 infers the
// dimension from the data.
//
// # Safety
// `path` must be a nul-terminated string and `out` a writable pointer slot.
enum SmStatus sm_dataset_load(const char *path, int32_t format, size_t dim, struct SmDataset **out);

// Builds a dataset from compressed rows: row `i` holds the zero-based,
// strictly increasing column indices `indices[offsets[i] .. offsets[i + 1]]`.
// `offsets` has `n_rows + 1` entries.
//
// # Safety
// `offsets` must point to `n_rows + 1` values and `indices` to at least
// `offsets[n_rows]` values (it may be null when that is 0).
enum SmStatus sm_dataset_from_rows(size_t dim,
                                   const uint32_t *indices,
                                   const size_t *offsets,
                                   size_t n_rows,
                                   struct SmDataset **out);

// # Safety
// `data` must be null or a handle from this library not yet freed.
void sm_dataset_free(struct SmDataset *data);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `data` must be null or a live handle.
size_t sm_dataset_len(const struct SmDataset *data);

// Number of columns, or 0 for a null handle.
//
// # Safety
// `data` must be null or a live handle.
size_t sm_dataset_dim(const struct SmDataset *data);

// Runs the restarted optimizer. A null `config` uses the defaults.
//
// # Safety
// `data` must be a live handle, `config` null or readable, `out` writable.
enum SmStatus sm_cluster(const struct SmDataset *data,
                         const struct SmConfig *config,
                         struct SmResult **out);

// # Safety
// `result` must be null or a handle from [`sm_cluster`] not yet freed.
void sm_result_free(struct SmResult *result);

// # Safety
// `result` must be null or a live handle.
size_t sm_result_num_clusters(const struct SmResult *result);

// Objective value in bits per row; NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double sm_result_total_cost(const struct SmResult *result);

// Copies cluster ids (0-based, dense) into `out`, which holds `len` slots;
// `len` must equal the row count.
//
// # Safety
// `result` must be a live handle and `out` writable for `len` values.
enum SmStatus sm_result_assignment(const struct SmResult *result, size_t *out, size_t len);

// # Safety
// `a` and `b` must each point to `n` values and `out` be writable.
enum SmStatus sm_adjusted_rand_index(const int64_t *a, const int64_t *b, size_t n, double *out);

// Expected per-row cost of one cluster versus two for the two-source block
// mixture; `two_wins` is set when two clusters are strictly cheaper.
//
// # Safety
// Output pointers must be writable.
enum SmStatus sm_analytic_costs(double p,
                                double alpha,
                                size_t d,
                                size_t dim,
                                double omega,
                                double *cost_one,
                                double *cost_two,
                                bool *two_wins);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSEMIX_H */
