/* divlab C API — generated by cbindgen, do not edit. */

#ifndef DIVLAB_H
#define DIVLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible API call.
 */
typedef enum DivlabStatus {
  DIVLAB_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  DIVLAB_STATUS_NULL_ARGUMENT = 1,
  /**
   * Invalid parameters or malformed JSON.
   */
  DIVLAB_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A numerical routine failed (divergent tilt, no convergence, ...).
   */
  DIVLAB_STATUS_NUMERIC = 3,
  /**
   * The request needs a claim family or feature that is not supported.
   */
  DIVLAB_STATUS_UNSUPPORTED = 4,
  /**
   * An internal panic was caught; the handle state is unchanged.
   */
  DIVLAB_STATUS_PANIC = 5,
} DivlabStatus;

/**
 * Opaque diffusion free-boundary solution.
 */
typedef struct DivlabDiffusion DivlabDiffusion;

/**
 * Opaque Cramér–Lundberg parameter set.
 */
typedef struct DivlabParams DivlabParams;

/**
 * Opaque band strategy.
 */
typedef struct DivlabStrategy DivlabStrategy;

/**
 * Opaque piecewise value function.
 */
typedef struct DivlabValueFn DivlabValueFn;

/**
 * Plain view of the diffusion solution.
 */
typedef struct DivlabDiffusionInfo {
  double gamma1;
  double gamma2;
  double b_d;
  double c_norm;
  double value_at_barrier;
} DivlabDiffusionInfo;

/**
 * Monte Carlo estimate.
 */
typedef struct DivlabSimResult {
  double mean;
  double std_error;
  double truncation_bound;
} DivlabSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; valid until the next failure.
 */
const char *divlab_last_error_message(void);

/**
 * Release a string returned by a `*_to_json` call.
 *
 * # Safety
 * `s` must originate from this library and not have been freed already.
 */
void divlab_string_free(char *s);

/**
 * Build parameters directly.  `family`: 0 exponential, 1 gamma (with
 * integer `shape`); `rate` is the claim rate parameter.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DivlabStatus divlab_params_new(double lambda,
                                    double theta,
                                    double delta,
                                    uint32_t family,
                                    uint32_t shape,
                                    double rate,
                                    struct DivlabParams **out);

/**
 * Parse the JSON parameter schema
 * `{"lambda", "theta", "delta", "claim": {"family", "shape"?, "rate"}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid.
 */
enum DivlabStatus divlab_params_from_json(const char *json, struct DivlabParams **out);

/**
 * # Safety
 * `p` must come from this library and not be freed twice.
 */
void divlab_params_free(struct DivlabParams *p);

/**
 * Solve the diffusion free-boundary problem for the given parameters.
 *
 * # Safety
 * `p` must be a live handle; `out` must be valid.
 */
enum DivlabStatus divlab_diffusion_solve(const struct DivlabParams *p,
                                         struct DivlabDiffusion **out);

/**
 * # Safety
 * `d` must be a live handle; `out` must be valid.
 */
enum DivlabStatus divlab_diffusion_info(const struct DivlabDiffusion *d,
                                        struct DivlabDiffusionInfo *out);

/**
 * V_D(x); the oscillatory branch extends below 0.
 *
 * # Safety
 * `d` must be a live handle.
 */
double divlab_vd_eval(const struct DivlabDiffusion *d, double x);

/**
 * First and second derivatives of V_D at x.
 *
 * # Safety
 * `d`, `d1`, `d2` must be valid.
 */
enum DivlabStatus divlab_vd_derivatives(const struct DivlabDiffusion *d,
                                        double x,
                                        double *d1,
                                        double *d2);

/**
 * # Safety
 * `d` must come from this library and not be freed twice.
 */
void divlab_diffusion_free(struct DivlabDiffusion *d);

/**
 * Optimal band value function for scale `n`.  `x_max <= 0` selects the
 * default search range 4·b_D.  Either out-pointer may be NULL if only one
 * of the two results is wanted.
 *
 * # Safety
 * `p` must be a live handle; non-NULL out-pointers must be valid.
 */
enum DivlabStatus divlab_bands_solve(const struct DivlabParams *p,
                                     double n,
                                     double x_max,
                                     struct DivlabValueFn **out_value,
                                     struct DivlabStrategy **out_strategy);

/**
 * Barrier payoff V_{b,n}.  `b <= 0` selects the diffusion barrier b_D.
 *
 * # Safety
 * `p` must be a live handle; `out` must be valid.
 */
enum DivlabStatus divlab_barrier_payoff(const struct DivlabParams *p,
                                        double n,
                                        double b,
                                        struct DivlabValueFn **out);

/**
 * # Safety
 * `v` must be a live handle.
 */
double divlab_valuefn_eval(const struct DivlabValueFn *v, double x);

/**
 * Right derivative at x.
 *
 * # Safety
 * `v` must be a live handle.
 */
double divlab_valuefn_derivative(const struct DivlabValueFn *v, double x);

/**
 * Serialize the piecewise structure; free with `divlab_string_free`.
 *
 * # Safety
 * `v` must be a live handle; `out` must be valid.
 */
enum DivlabStatus divlab_valuefn_to_json(const struct DivlabValueFn *v, char **out);

/**
 * # Safety
 * `v` must come from this library and not be freed twice.
 */
void divlab_valuefn_free(struct DivlabValueFn *v);

/**
 * Barrier strategy at level `b`.
 *
 * # Safety
 * `out` must be valid.
 */
enum DivlabStatus divlab_strategy_barrier(double b, struct DivlabStrategy **out);

/**
 * Parse a strategy from its JSON form.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be valid.
 */
enum DivlabStatus divlab_strategy_from_json(const char *json, struct DivlabStrategy **out);

/**
 * Lower end of the unbounded pay interval.
 *
 * # Safety
 * `s` must be a live handle.
 */
double divlab_strategy_top_threshold(const struct DivlabStrategy *s);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void divlab_strategy_free(struct DivlabStrategy *s);

/**
 * Bound certificate (A, q, p, C', C'') as JSON; free with
 * `divlab_string_free`.  `n_tilt <= 0` selects the default tilt scale.
 *
 * # Safety
 * `p` must be a live handle; `out` must be valid.
 */
enum DivlabStatus divlab_bounds_json(const struct DivlabParams *p, double n_tilt, char **out);

/**
 * Monte Carlo payoff of `strat` at scale `n`.  `horizon <= 0` selects the
 * default 50/δ.
 *
 * # Safety
 * `p` and `strat` must be live handles; `out` must be valid.
 */
enum DivlabStatus divlab_simulate(const struct DivlabParams *p,
                                  double n,
                                  const struct DivlabStrategy *strat,
                                  uint64_t paths,
                                  uint64_t seed,
                                  double x0,
                                  double horizon,
                                  struct DivlabSimResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIVLAB_H */
