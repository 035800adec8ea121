/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef PELS_H
#define PELS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PelsAlgorithm {
  PELS_ALGORITHM_GD = 0,
  PELS_ALGORITHM_NCG = 1,
  PELS_ALGORITHM_LBFGS = 2,
} PelsAlgorithm;

typedef enum PelsLineSearch {
  PELS_LINE_SEARCH_WOLFE = 0,
  PELS_LINE_SEARCH_PELS = 1,
} PelsLineSearch;

typedef enum PelsLoss {
  PELS_LOSS_LOGISTIC = 0,
  PELS_LOSS_LEAST_SQUARES = 1,
} PelsLoss;

typedef enum PelsStatus {
  PELS_STATUS_OK = 0,
  PELS_STATUS_NULL_POINTER = 1,
  PELS_STATUS_INVALID_ARGUMENT = 2,
  PELS_STATUS_IO = 3,
  PELS_STATUS_PARSE = 4,
  PELS_STATUS_NON_FINITE = 5,
  PELS_STATUS_DIMENSION_MISMATCH = 6,
  PELS_STATUS_OUT_OF_RANGE = 7,
  PELS_STATUS_PANIC = 8,
} PelsStatus;

typedef enum PelsStepRoute {
  PELS_STEP_ROUTE_NEWTON = 0,
  PELS_STEP_ROUTE_NEWTON_FALLBACK = 1,
  PELS_STEP_ROUTE_HALVED = 2,
} PelsStepRoute;

typedef enum PelsTermination {
  PELS_TERMINATION_CONVERGED = 0,
  PELS_TERMINATION_MAX_ITERS = 1,
  PELS_TERMINATION_STALLED = 2,
} PelsTermination;

/*
 Opaque sharded dataset.
 */
typedef struct PelsDataset PelsDataset;

/*
 Opaque training result.
 */
typedef struct PelsResult PelsResult;

/*
 Training settings. Obtain defaults from [`pels_config_default`].
 */
typedef struct PelsConfig {
  enum PelsAlgorithm algorithm;
  enum PelsLineSearch linesearch;
  enum PelsLoss loss;
  double lambda;
  uint32_t degree;
  double theta;
  double nu1;
  double nu2;
  uint32_t history;
  /*
   Negative selects the default for the chosen line search.
   */
  double powell_threshold;
  double grad_tol;
  uint32_t max_iters;
  /*
   0 sends every shard partial straight to the driver.
   */
  uint32_t tree_levels;
  /*
   Non-zero records wall-clock time in the trace.
   */
  uint8_t record_time;
} PelsConfig;

typedef struct PelsTraceRecord {
  uint64_t k;
  double loss;
  double grad_norm;
  double step_size;
  uint64_t n_e;
  uint64_t cum_fg_evals;
  uint64_t cum_coeff_evals;
  uint64_t cum_bytes;
  double elapsed_seconds;
} PelsTraceRecord;

typedef struct PelsCommStats {
  uint64_t messages;
  uint64_t bytes;
  uint64_t driver_fan_in;
  uint64_t reduces;
  uint64_t broadcast_messages;
  uint64_t broadcast_bytes;
} PelsCommStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *pels_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *pels_version(void);

/*
 Reads a LIBSVM file. `dim == 0` infers the dimension from the largest
 index. Labels are mapped to {0, 1} for the logistic loss and kept as is
 for least squares. `augment != 0` appends a constant feature.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PelsStatus pels_dataset_from_libsvm(const char *path,
                                         enum PelsLoss loss,
                                         uint64_t dim,
                                         uint8_t augment,
                                         uint32_t n_shards,
                                         struct PelsDataset **out);

/*
 Generates `n` logistic-model instances of dimension `m`.

 # Safety
 `out` must be a valid pointer.
 */
enum PelsStatus pels_dataset_synthetic(uint64_t n,
                                       uint64_t m,
                                       uint64_t seed,
                                       uint8_t augment,
                                       uint32_t n_shards,
                                       struct PelsDataset **out);

/*
 # Safety
 `dataset` must be null or a handle from this library not yet freed.
 */
void pels_dataset_free(struct PelsDataset *dataset);

/*
 Instance count, or 0 for a null handle.

 # Safety
 `dataset` must be null or a live handle.
 */
uint64_t pels_dataset_len(const struct PelsDataset *dataset);

/*
 Parameter dimension (including any constant feature), or 0 for null.

 # Safety
 `dataset` must be null or a live handle.
 */
uint64_t pels_dataset_dim(const struct PelsDataset *dataset);

/*
 # Safety
 `dataset` must be null or a live handle.
 */
uint32_t pels_dataset_shards(const struct PelsDataset *dataset);

struct PelsConfig pels_config_default(enum PelsAlgorithm algorithm, enum PelsLineSearch linesearch);

/*
 Trains from `w = 0`.

 # Safety
 `dataset` and `config` must be live pointers and `out` valid for writes.
 */
enum PelsStatus pels_train(const struct PelsDataset *dataset,
                           const struct PelsConfig *config,
                           struct PelsResult **out);

/*
 # Safety
 `result` must be null or a handle from this library not yet freed.
 */
void pels_result_free(struct PelsResult *result);

/*
 # Safety
 `result` must be a live handle and `out` valid for writes.
 */
enum PelsStatus pels_result_termination(const struct PelsResult *result, enum PelsTermination *out);

/*
 Number of outer iterations performed, or 0 for null.

 # Safety
 `result` must be null or a live handle.
 */
uint64_t pels_result_iterations(const struct PelsResult *result);

/*
 Final loss, or NaN for null.

 # Safety
 `result` must be null or a live handle.
 */
double pels_result_final_loss(const struct PelsResult *result);

/*
 Length of the weight vector, or 0 for null.

 # Safety
 `result` must be null or a live handle.
 */
uint64_t pels_result_dim(const struct PelsResult *result);

/*
 Copies the final weights into `buf`, which must hold `len` doubles;
 `len` must equal [`pels_result_dim`].

 # Safety
 `buf` must be valid for `len` writes.
 */
enum PelsStatus pels_result_weights(const struct PelsResult *result, double *buf, uint64_t len);

/*
 Trace rows (iterations + 1), or 0 for null.

 # Safety
 `result` must be null or a live handle.
 */
uint64_t pels_result_trace_len(const struct PelsResult *result);

/*
 # Safety
 `result` must be a live handle and `out` valid for writes.
 */
enum PelsStatus pels_result_trace_get(const struct PelsResult *result,
                                      uint64_t index,
                                      struct PelsTraceRecord *out);

/*
 # Safety
 `result` must be a live handle and `out` valid for writes.
 */
enum PelsStatus pels_result_comm(const struct PelsResult *result, struct PelsCommStats *out);

/*
 Writes the trace as CSV to `path`.

 # Safety
 `result` must be a live handle and `path` a NUL-terminated string.
 */
enum PelsStatus pels_result_write_trace_csv(const struct PelsResult *result, const char *path);

/*
 Evaluates `W(alpha) = sum_l coeffs[l] (alpha - alpha_j)^l` and its first
 two derivatives. Any of the output pointers may be null.

 # Safety
 `coeffs` must point to `len` doubles; non-null outputs must be writable.
 */
enum PelsStatus pels_poly_eval(double alpha_j,
                               const double *coeffs,
                               uint64_t len,
                               double alpha,
                               double *value,
                               double *slope,
                               double *curvature);

/*
 One step of the polynomial line search: the positive minimizer of the
 model expanded about `alpha_j`, using default tolerances. `coeffs` holds
 `degree + 1` values with `degree >= 2`.

 # Safety
 `coeffs` must point to `len` doubles; `alpha` and `route` must be
 writable (`route` may be null).
 */
enum PelsStatus pels_poly_minimize(double alpha_j,
                                   const double *coeffs,
                                   uint64_t len,
                                   double *alpha,
                                   enum PelsStepRoute *route);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PELS_H */
