/* C interface to the gmmot library. See gmmot_last_error_message for error details. */

#ifndef GMMOT_H
#define GMMOT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Covariance structure for fitted components.
typedef enum GmmotCovariance {
  // Unconstrained symmetric positive-definite covariances.
  GMMOT_COVARIANCE_FULL = 0,
  // Diagonal covariances.
  GMMOT_COVARIANCE_DIAGONAL = 1,
} GmmotCovariance;

// Result of a C-ABI call.
typedef enum GmmotStatus {
  // The call succeeded.
  GMMOT_STATUS_OK = 0,
  // An argument violated a documented precondition (null pointer,
  // length mismatch, non-finite value, malformed configuration).
  GMMOT_STATUS_INVALID_ARGUMENT = 1,
  // Serialized model bytes could not be parsed.
  GMMOT_STATUS_PARSE = 2,
  // A numeric computation failed (degenerate covariance, empty
  // component, solver stall, infeasible marginals).
  GMMOT_STATUS_COMPUTE = 3,
  // An internal invariant was violated; the library state is still
  // consistent but the call produced nothing.
  GMMOT_STATUS_PANIC = 4,
} GmmotStatus;

// Cost convention for the mixture transport distance.
typedef enum GmmotCost {
  // Pair costs are squared Gaussian W2 values; the distance is the
  // square root of the transport objective.
  GMMOT_COST_SQUARED = 0,
  // Pair costs are unsquared Gaussian W2 values; the distance is the
  // transport objective itself.
  GMMOT_COST_LINEAR = 1,
} GmmotCost;

// Opaque handle to a Gaussian mixture model.
typedef struct GmmotModel GmmotModel;

// Fitting parameters. Obtain defaults from `gmmot_fit_options_default`
// and override individual fields.
typedef struct GmmotFitOptions {
  // Number of mixture components (must be >= 1).
  size_t n_components;
  // Covariance structure.
  enum GmmotCovariance covariance;
  // Covariance regularization added to every diagonal. Non-finite or
  // non-positive means "choose automatically from the data scale".
  double reg_eps;
  // Relative log-likelihood change below which fitting stops.
  double tol;
  // Maximum EM iterations per restart.
  size_t max_iter;
  // Number of differently-seeded restarts; the best fit wins.
  size_t n_restarts;
  // Seed for deterministic initialization.
  uint64_t seed;
} GmmotFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gmmot_version(void);

// Message describing the most recent failure on the calling thread, as a
// NUL-terminated string. Empty if no call on this thread has failed. The
// pointer stays valid until the next failing call on the same thread.
const char *gmmot_last_error_message(void);

// Fills `options` with the default fitting parameters.
//
// # Safety
// `options` must point to writable memory for one `GmmotFitOptions`.
void gmmot_fit_options_default(struct GmmotFitOptions *options);

// Fits a mixture model to `rows` observations of `cols` coordinates laid
// out row-major in `data`. On success stores a new handle in `out_model`;
// the caller owns it and must release it with `gmmot_model_free`.
//
// # Safety
// `data` must point to `rows * cols` readable doubles and `out_model` to a
// writable pointer slot. A null `options` selects the defaults; otherwise
// it must point to a readable `GmmotFitOptions`.
enum GmmotStatus gmmot_fit(const double *data,
                           size_t rows,
                           size_t cols,
                           const struct GmmotFitOptions *options,
                           struct GmmotModel **out_model);

// Parses a serialized model (the JSON produced by
// `gmmot_model_serialize` or the CLI). On success stores a new handle in
// `out_model`; the caller owns it.
//
// # Safety
// `bytes` must point to `len` readable bytes and `out_model` to a writable
// pointer slot.
enum GmmotStatus gmmot_model_parse(const uint8_t *bytes, size_t len, struct GmmotModel **out_model);

// Serializes `model` to JSON. On success stores a fresh byte buffer and
// its length; release the buffer with `gmmot_bytes_free`. The bytes are
// valid UTF-8 and are not NUL-terminated.
//
// # Safety
// `model` must be a live handle; `out_bytes` and `out_len` must be
// writable.
enum GmmotStatus gmmot_model_serialize(const struct GmmotModel *model,
                                       uint8_t **out_bytes,
                                       size_t *out_len);

// Releases a buffer produced by `gmmot_model_serialize`. `len` must be
// the length that call reported. A null `bytes` is a no-op.
//
// # Safety
// `bytes`/`len` must come from one `gmmot_model_serialize` call, unfreed.
void gmmot_bytes_free(uint8_t *bytes, size_t len);

// Releases a model handle. A null handle is a no-op.
//
// # Safety
// `model` must come from this library and not have been freed already.
void gmmot_model_free(struct GmmotModel *model);

// Dimension of the model's observation space, or 0 for a null handle.
//
// # Safety
// `model` must be a live handle or null.
size_t gmmot_model_dim(const struct GmmotModel *model);

// Number of mixture components, or 0 for a null handle.
//
// # Safety
// `model` must be a live handle or null.
size_t gmmot_model_n_components(const struct GmmotModel *model);

// Copies the component weights into `out`, which must hold exactly
// `gmmot_model_n_components(model)` doubles.
//
// # Safety
// `model` must be a live handle; `out` must point to `len` writable
// doubles.
enum GmmotStatus gmmot_model_weights(const struct GmmotModel *model, double *out, size_t len);

// Copies component `index`'s mean (`dim` doubles) into `out_mean` and its
// covariance (`dim * dim` doubles, row-major) into `out_cov`. Either
// output may be null to skip it.
//
// # Safety
// `model` must be a live handle; non-null outputs must be writable at the
// sizes above for `dim = gmmot_model_dim(model)`.
enum GmmotStatus gmmot_model_component(const struct GmmotModel *model,
                                       size_t index,
                                       double *out_mean,
                                       double *out_cov);

// Mixture transport distance between two models of equal dimension. The
// distance is stored in `out_distance`; the raw transport objective (the
// cost-weighted flow total before any root) is stored in `out_objective`
// unless that pointer is null.
//
// # Safety
// `a` and `b` must be live handles; `out_distance` must be writable;
// `out_objective` must be writable or null.
enum GmmotStatus gmmot_wasserstein(const struct GmmotModel *a,
                                   const struct GmmotModel *b,
                                   enum GmmotCost cost,
                                   double *out_distance,
                                   double *out_objective);

// Squared 2-Wasserstein distance between two Gaussians given as a mean
// (`dim` doubles) and a row-major covariance (`dim * dim` doubles) each.
//
// # Safety
// The four input pointers must be readable at the sizes above; `out_value`
// must be writable.
enum GmmotStatus gmmot_gaussian_w2_squared(const double *mean_a,
                                           const double *cov_a,
                                           const double *mean_b,
                                           const double *cov_b,
                                           size_t dim,
                                           double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GMMOT_H */
