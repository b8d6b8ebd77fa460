/* C interface to the tpsmooth spline library. Generated; do not edit. */

#ifndef TPSMOOTH_H
#define TPSMOOTH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call. Numeric values match the CLI's exit codes for the same
// failure classes, with 1 and 6 reserved for conditions only the C boundary
// can produce.
typedef enum TpStatus {
  TP_STATUS_OK = 0,
  // A required pointer argument was null.
  TP_STATUS_NULL_ARGUMENT = 1,
  // Rejected input: bad sizes, duplicate points, unparsable document.
  TP_STATUS_INVALID_INPUT = 2,
  // The solve or search failed: singular system, unattainable budget,
  // non-unisolvent design.
  TP_STATUS_NUMERIC_FAILURE = 3,
  // Derivative order outside what the smoothness order supports.
  TP_STATUS_UNSUPPORTED_DERIVATIVE = 4,
  // Model document written by an incompatible version.
  TP_STATUS_UNSUPPORTED_VERSION = 5,
  // A panic was caught at the boundary; state is unchanged.
  TP_STATUS_INTERNAL_ERROR = 6,
} TpStatus;

// Which budget regime a fit landed in. `Interior` means the constraint was
// met by the bisection search rather than by a closed-form endpoint.
typedef enum TpRegime {
  TP_REGIME_INTERIOR = 0,
  TP_REGIME_INTERPOLANT = 1,
  TP_REGIME_POLYNOMIAL = 2,
} TpRegime;

// Opaque fitted model. Created by the `tp_fit_*` family or
// `tp_model_from_document`, released with `tp_model_free`.
typedef struct TpModel TpModel;

// Fit diagnostics mirrored from the Rust side. `lambda_star` is 0 for an
// interpolant and +inf for a pure polynomial fit.
typedef struct TpFitInfo {
  double achieved_j;
  double achieved_en;
  double lambda_star;
  // Penalized solves spent bracketing and bisecting; 0 for direct fits.
  uint64_t iterations;
  enum TpRegime regime;
  // True when the unregularized system needed a diagonal fallback.
  bool ridge_fallback;
} TpFitInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the most recent error message on this thread into `buf` (always
// NUL-terminated when `cap` > 0, truncating if needed) and returns the full
// message length in bytes, excluding the terminator. Call with a null `buf`
// or zero `cap` to query the length alone.
size_t tp_last_error(char *buf, size_t cap);

// Library version as a static NUL-terminated string; never freed.
const char *tp_version(void);

// Fits with a fixed smoothing weight `lambda` (>= 0; zero interpolates).
// On success writes a handle to `out_model` and, when `out_info` is
// non-null, the fit diagnostics.
enum TpStatus tp_fit_fixed_weight(size_t dim,
                                  size_t n,
                                  const double *points,
                                  const double *y,
                                  size_t m,
                                  const double *domain_lo,
                                  const double *domain_hi,
                                  double lambda,
                                  struct TpModel **out_model,
                                  struct TpFitInfo *out_info);

// Minimizes mean squared residual subject to roughness <= `u_n`.
enum TpStatus tp_fit_roughness_budget(size_t dim,
                                      size_t n,
                                      const double *points,
                                      const double *y,
                                      size_t m,
                                      const double *domain_lo,
                                      const double *domain_hi,
                                      double u_n,
                                      struct TpModel **out_model,
                                      struct TpFitInfo *out_info);

// Minimizes roughness subject to mean squared residual <= `s_n`.
enum TpStatus tp_fit_residual_budget(size_t dim,
                                     size_t n,
                                     const double *points,
                                     const double *y,
                                     size_t m,
                                     const double *domain_lo,
                                     const double *domain_hi,
                                     double s_n,
                                     struct TpModel **out_model,
                                     struct TpFitInfo *out_info);

// Evaluates the model at `x` (length `x_len`, which must equal the model's
// dimension).
enum TpStatus tp_model_eval(const struct TpModel *model,
                            const double *x,
                            size_t x_len,
                            double *out);

// Evaluates a partial derivative: `alpha` gives the order per axis and must
// have the model's dimension.
enum TpStatus tp_model_eval_deriv(const struct TpModel *model,
                                  const double *x,
                                  size_t x_len,
                                  const uint32_t *alpha,
                                  size_t alpha_len,
                                  double *out);

// Input dimension of the model; 0 for a null handle.
size_t tp_model_dim(const struct TpModel *model);

// Smoothness order of the model; 0 for a null handle.
size_t tp_model_order(const struct TpModel *model);

// Smoothing weight the model was fitted with: 0 for an interpolant, +inf
// for a pure polynomial fit, NaN for a null handle.
double tp_model_lambda(const struct TpModel *model);

// Serializes the model to a NUL-terminated document the caller must release
// with `tp_string_free`.
enum TpStatus tp_model_to_document(const struct TpModel *model, char **out);

// Parses a document produced by `tp_model_to_document`. The text must be
// NUL-terminated UTF-8.
enum TpStatus tp_model_from_document(const char *doc, struct TpModel **out_model);

// Estimates the residual budget from replicated observations: `reps` is
// row-major `n * r` with the replicates of each point contiguous. Writes
// the budget to `out_s_n` and, when `out_means` is non-null, the per-point
// replicate means (length `n`).
enum TpStatus tp_replicate_budget(size_t dim,
                                  size_t n,
                                  size_t r,
                                  const double *points,
                                  const double *reps,
                                  double *out_s_n,
                                  double *out_means);

// Estimates the residual budget without replicates by averaging sample
// variances over a grid of `cells_per_axis` cells per axis. Optionally
// reports how many cells held at least two points.
enum TpStatus tp_partition_budget(size_t dim,
                                  size_t n,
                                  const double *points,
                                  const double *y,
                                  const double *domain_lo,
                                  const double *domain_hi,
                                  size_t cells_per_axis,
                                  double *out_s_n,
                                  size_t *out_cells_used);

// Releases a model handle. Null is a no-op.
void tp_model_free(struct TpModel *model);

// Releases a string returned by this library. Null is a no-op.
void tp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TPSMOOTH_H */
