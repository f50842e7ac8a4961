#ifndef TSBC_H
#define TSBC_H

/* Auto-generated by cbindgen from tsbc-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define TSBC_OK 0

/**
 * Invalid argument (bad study index, score choice, or option value).
 */
#define TSBC_ERR_USAGE 1

/**
 * Numerical failure during estimation.
 */
#define TSBC_ERR_NUMERIC 2

/**
 * A required pointer argument was null.
 */
#define TSBC_ERR_NULL 3

/**
 * A panic was caught at the boundary.
 */
#define TSBC_ERR_PANIC 4

/**
 * Opaque result handle: naive and bias-corrected focal estimates plus
 * optional standard errors.
 */
typedef struct TsbcFit TsbcFit;

/**
 * Opaque tuning handle for [`tsbc_correct`].
 */
typedef struct TsbcOptions TsbcOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. Borrowed pointer,
 * valid until the next failing call on the same thread.
 */
const char *tsbc_last_error(void);

/**
 * Library version string (static storage).
 */
const char *tsbc_version(void);

/**
 * Fresh options with the library defaults (1000 recursion iterations,
 * a = 3, b = 0.6, 1000 covariance replications, standard errors on).
 */
struct TsbcOptions *tsbc_options_new(void);

/**
 * Free an options handle. Null is ignored.
 *
 * # Safety
 * `opts` must be a pointer returned by [`tsbc_options_new`] that has not
 * been freed already.
 */
void tsbc_options_free(struct TsbcOptions *opts);

/**
 * # Safety
 * `opts` must be a live pointer from [`tsbc_options_new`].
 */
int32_t tsbc_options_set_seed(struct TsbcOptions *opts, uint64_t seed);

/**
 * Tune the bias-correction recursion: iteration budget, learning-rate
 * constants, and datasets averaged per iteration.
 *
 * # Safety
 * `opts` must be a live pointer from [`tsbc_options_new`].
 */
int32_t tsbc_options_set_rm(struct TsbcOptions *opts,
                            size_t iterations,
                            double a,
                            double b,
                            size_t draws_per_iteration);

/**
 * Tune the covariance stage: Monte Carlo replications, perturbation
 * constant (0 = study default), and perturbation block count (0 = default).
 *
 * # Safety
 * `opts` must be a live pointer from [`tsbc_options_new`].
 */
int32_t tsbc_options_set_acm(struct TsbcOptions *opts,
                             size_t replications,
                             double delta,
                             size_t blocks);

/**
 * # Safety
 * `opts` must be a live pointer from [`tsbc_options_new`].
 */
int32_t tsbc_options_set_compute_se(struct TsbcOptions *opts, bool compute_se);

/**
 * Bias-correct a dataset.
 *
 * `data` points at `n_rows * n_cols` doubles in row-major order; `study`
 * is 1, 2, or 3 and fixes the expected column count (10, 15, or 40);
 * `scores` is one of "MM", "BB", "RR", "BR", "EAP" as valid for the study.
 * `opts` may be null for defaults. On failure returns null, sets `*status`
 * (when non-null), and records a message for [`tsbc_last_error`].
 *
 * # Safety
 * `data` must point at `n_rows * n_cols` readable doubles; `scores` must
 * be a NUL-terminated string; `opts`, when non-null, must be a live
 * pointer from [`tsbc_options_new`]; `status`, when non-null, must be
 * writable.
 */
struct TsbcFit *tsbc_correct(int32_t study,
                             const char *scores,
                             const double *data,
                             size_t n_rows,
                             size_t n_cols,
                             const struct TsbcOptions *opts,
                             int32_t *status);

/**
 * Number of focal parameters in a fit.
 *
 * # Safety
 * `fit` must be a live pointer from [`tsbc_correct`].
 */
size_t tsbc_fit_focal_len(const struct TsbcFit *fit);

/**
 * Name of focal parameter `i`, or null when out of range. Borrowed
 * pointer, valid while the fit handle lives.
 *
 * # Safety
 * `fit` must be a live pointer from [`tsbc_correct`].
 */
const char *tsbc_fit_param_name(const struct TsbcFit *fit, size_t i);

/**
 * Bias-corrected estimate of focal parameter `i` (NaN when out of range).
 *
 * # Safety
 * `fit` must be a live pointer from [`tsbc_correct`].
 */
double tsbc_fit_estimate(const struct TsbcFit *fit, size_t i);

/**
 * Naive (uncorrected) estimate of focal parameter `i`.
 *
 * # Safety
 * `fit` must be a live pointer from [`tsbc_correct`].
 */
double tsbc_fit_naive_estimate(const struct TsbcFit *fit, size_t i);

/**
 * Standard error of the bias-corrected estimate `i`; NaN when standard
 * errors were not computed or `i` is out of range.
 *
 * # Safety
 * `fit` must be a live pointer from [`tsbc_correct`].
 */
double tsbc_fit_se(const struct TsbcFit *fit, size_t i);

/**
 * Free a fit handle. Null is ignored.
 *
 * # Safety
 * `fit` must be a pointer returned by [`tsbc_correct`] that has not been
 * freed already.
 */
void tsbc_fit_free(struct TsbcFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSBC_H */
