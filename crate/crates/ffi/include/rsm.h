#ifndef RSM_H
#define RSM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsmStatus {
  RSM_STATUS_OK = 0,
  RSM_STATUS_NULL_POINTER = 1,
  RSM_STATUS_INVALID_ARGUMENT = 2,
  RSM_STATUS_NOT_STOCHASTIC = 3,
  RSM_STATUS_NO_UNIQUE_STATIONARY = 4,
  RSM_STATUS_NUMERICAL = 5,
  RSM_STATUS_DATA = 6,
  RSM_STATUS_IO = 7,
  RSM_STATUS_BUFFER_TOO_SMALL = 8,
  RSM_STATUS_PANIC = 9,
} RsmStatus;

// Loaded click log with its schema.
typedef struct RsmDataset RsmDataset;

// Learned weights together with what is needed to score new contexts.
typedef struct RsmModel RsmModel;

typedef struct RsmFitConfig {
  double lambda;
  double eta;
  double halt_eps;
  size_t max_iters;
} RsmFitConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a success.
//
// The pointer stays valid until the next `rsm_*` call on the same thread.
const char *rsm_last_error(void);

// Stationary distribution of the row-major `n x n` matrix `p`, written to `out[0..n]`.
//
// # Safety
// `p` must point to `n * n` doubles and `out` to `n` writable doubles.
enum RsmStatus rsm_stationary(const double *p, size_t n, double *out);

// Rank-encoded topology of `values`, written row-major to `out[0..n*n]`.
//
// # Safety
// `values` must point to `n` doubles and `out` to `n * n` writable doubles.
enum RsmStatus rsm_encode_rank_topology(const double *values,
                                        size_t n,
                                        bool higher_is_better,
                                        double *out);

// Loads a dataset. `data` is a manifest, a JSON dataset, or a CSV log; `schema` is a JSON
// schema file required for CSV and ignored (may be null) otherwise.
//
// # Safety
// `data` and a non-null `schema` must be NUL-terminated strings; `out` must be writable.
enum RsmStatus rsm_dataset_load(const char *data, const char *schema, struct RsmDataset **out);

// Number of contexts, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t rsm_dataset_len(const struct RsmDataset *dataset);

// Number of topologies per context, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t rsm_dataset_num_features(const struct RsmDataset *dataset);

// # Safety
// `dataset` must be null or a handle not yet freed.
void rsm_dataset_free(struct RsmDataset *dataset);

// Default learner settings.
struct RsmFitConfig rsm_fit_config_default(void);

// Learns weights from `dataset`. A null `config` means the defaults.
//
// # Safety
// `dataset` must be a live handle, `config` null or valid, `out` writable.
enum RsmStatus rsm_fit(const struct RsmDataset *dataset,
                       const struct RsmFitConfig *config,
                       struct RsmModel **out);

// Builds a model from reporting-form weights (non-negative, summing to one).
//
// # Safety
// `weights` must point to `k` doubles matching the dataset's feature count; `out` writable.
enum RsmStatus rsm_model_from_weights(const struct RsmDataset *dataset,
                                      const double *weights,
                                      size_t k,
                                      double lambda,
                                      struct RsmModel **out);

// Copies the reporting-form weights into `out[0..len]`; `len` must equal the feature count.
//
// # Safety
// `model` must be a live handle and `out` must hold `len` doubles.
enum RsmStatus rsm_model_weights(const struct RsmModel *model, double *out, size_t len);

// Mean absolute residual on the training set, iteration count and convergence flag.
// Any output pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must be writable.
enum RsmStatus rsm_model_fit_info(const struct RsmModel *model,
                                  double *err_s,
                                  size_t *iterations,
                                  bool *converged);

// Scores the items of context `row` of `dataset` in file order. `*written` receives the item count.
//
// # Safety
// Handles must be live; `out` must hold `cap` doubles and `written` be writable.
enum RsmStatus rsm_model_score_context(const struct RsmModel *model,
                                       const struct RsmDataset *dataset,
                                       size_t row,
                                       double *out,
                                       size_t cap,
                                       size_t *written);

// # Safety
// `model` must be null or a handle not yet freed.
void rsm_model_free(struct RsmModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSM_H */
