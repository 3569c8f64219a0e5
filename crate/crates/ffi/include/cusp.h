#ifndef CUSP_H
#define CUSP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CuspEstimator {
  CUSP_ESTIMATOR_MLE = 0,
  /**
   * Posterior mean under the uniform prior on Θ.
   */
  CUSP_ESTIMATOR_BAYES = 1,
  CUSP_ESTIMATOR_MDE = 2,
} CuspEstimator;

/**
 * Shape of the regular speed `h`.
 */
typedef enum CuspHKind {
  /**
   * `h(x) = p0`.
   */
  CUSP_H_KIND_CONSTANT = 0,
  /**
   * `h(x) = p0 + p1 / (1 + x²)`.
   */
  CUSP_H_KIND_LOGISTIC = 1,
} CuspHKind;

/**
 * Result codes.
 */
typedef enum CuspStatus {
  CUSP_STATUS_OK = 0,
  CUSP_STATUS_NULL_POINTER = 1,
  CUSP_STATUS_INVALID_ARGUMENT = 2,
  CUSP_STATUS_INVALID_MODEL = 3,
  CUSP_STATUS_DOMAIN = 4,
  CUSP_STATUS_SHAPE = 5,
  CUSP_STATUS_NUMERICAL = 6,
  CUSP_STATUS_CONFIG = 7,
  CUSP_STATUS_IO = 8,
  CUSP_STATUS_BUFFER_TOO_SMALL = 9,
  CUSP_STATUS_PANIC = 10,
} CuspStatus;

/**
 * Opaque model handle.
 */
typedef struct CuspModelHandle CuspModelHandle;

/**
 * Opaque path handle.
 */
typedef struct CuspPathHandle CuspPathHandle;

typedef struct CuspLimitConstants {
  double gamma_sq;
  double gamma;
  double hurst;
  double cusp_integral;
} CuspLimitConstants;

typedef struct CuspEstimate {
  double theta_hat;
  size_t levels;
  size_t evaluations;
  /**
   * Non-zero when several grid nodes attained the optimum.
   */
  int32_t multiplicity;
} CuspEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cusp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cusp_version(void);

/**
 * Creates a model; `p0` and `p1` parametrize `h` as documented on
 * [`CuspHKind`].
 */
enum CuspStatus cusp_model_new(double a,
                               double kappa,
                               enum CuspHKind h_kind,
                               double p0,
                               double p1,
                               double x0,
                               double horizon,
                               double theta_lo,
                               double theta_hi,
                               struct CuspModelHandle **out);

/**
 * The baseline model: `κ = 1/4`, `a = 1`, `h ≡ 1`, `x₀ = 0`, `T = 3`,
 * `Θ = (0.5, 1.5)`.
 */
enum CuspStatus cusp_model_reference(struct CuspModelHandle **out);

/**
 * Creates a model from its JSON form, e.g.
 * `{"a":1,"kappa":0.25,"h":{"name":"constant","params":{"c":1}},"x0":0,"T":3,"theta_lo":0.5,"theta_hi":1.5}`.
 */
enum CuspStatus cusp_model_from_json(const char *json,
                                     struct CuspModelHandle **out);

void cusp_model_free(struct CuspModelHandle *model);

/**
 * `S(θ, x)`.
 */
enum CuspStatus cusp_model_drift(const struct CuspModelHandle *model,
                                 double theta,
                                 double x,
                                 double *out);

/**
 * `H = κ + 1/2`.
 */
enum CuspStatus cusp_model_hurst(const struct CuspModelHandle *model, double *out);

/**
 * Checks the model conditions with `h ≥ b` and `|h'| ≤ h1`; writes the
 * number of violated clauses. Their descriptions are available through
 * [`cusp_last_error_message`] when the count is non-zero.
 */
enum CuspStatus cusp_model_validate(const struct CuspModelHandle *model,
                                    double b,
                                    double h1,
                                    size_t *violations);

/**
 * `Γ²`, `γ`, `H` and the cusp integral at `θ₀`.
 */
enum CuspStatus cusp_limit_constants(const struct CuspModelHandle *model,
                                     double theta0,
                                     struct CuspLimitConstants *out);

/**
 * RK4 solution of the noiseless equation on `n_steps` uniform steps.
 */
enum CuspStatus cusp_solve_limit_ode(const struct CuspModelHandle *model,
                                     double theta,
                                     size_t n_steps,
                                     struct CuspPathHandle **out);

/**
 * Euler–Maruyama observation path with noise from stream
 * `(master_seed, replicate_index)`.
 */
enum CuspStatus cusp_simulate_path(const struct CuspModelHandle *model,
                                   double theta,
                                   double eps,
                                   size_t n_steps,
                                   uint64_t master_seed,
                                   uint64_t replicate_index,
                                   struct CuspPathHandle **out);

/**
 * Wraps externally observed data as a path (`len ≥ 2`, `times[0] = 0`,
 * strictly increasing times).
 */
enum CuspStatus cusp_path_from_values(const double *times,
                                      const double *values,
                                      size_t len,
                                      struct CuspPathHandle **out);

void cusp_path_free(struct CuspPathHandle *path);

/**
 * Number of nodes (steps + 1).
 */
enum CuspStatus cusp_path_len(const struct CuspPathHandle *path, size_t *out);

enum CuspStatus cusp_path_values(const struct CuspPathHandle *path, double *buf, size_t capacity);

enum CuspStatus cusp_path_times(const struct CuspPathHandle *path, double *buf, size_t capacity);

/**
 * `ln L(θ_num) − ln L(θ_den)` on an observed path.
 */
enum CuspStatus cusp_log_likelihood_ratio(const struct CuspModelHandle *model,
                                          const struct CuspPathHandle *path,
                                          double theta_num,
                                          double theta_den,
                                          double eps,
                                          double *out);

/**
 * Runs one estimator on an observed path at noise level `eps`.
 */
enum CuspStatus cusp_estimate(const struct CuspModelHandle *model,
                              const struct CuspPathHandle *path,
                              double eps,
                              enum CuspEstimator estimator,
                              struct CuspEstimate *out);

/**
 * Two-sample Kolmogorov–Smirnov distance.
 */
enum CuspStatus cusp_ks_distance(const double *a,
                                 size_t na,
                                 const double *b,
                                 size_t nb,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUSP_H */
