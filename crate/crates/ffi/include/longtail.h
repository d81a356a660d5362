#ifndef LONGTAIL_H
#define LONGTAIL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. The nonzero error codes match the command-line exit codes.
typedef enum LtStatus {
  LT_STATUS_OK = 0,
  LT_STATUS_NULL_POINTER = 1,
  LT_STATUS_INPUT_ERROR = 2,
  LT_STATUS_NUMERIC_ERROR = 3,
  LT_STATUS_INTERNAL_ERROR = 4,
  LT_STATUS_PANIC = 5,
} LtStatus;

// A set of lifetime records.
typedef struct LtDataset LtDataset;

// A maximum likelihood fit.
typedef struct LtFit LtFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on the thread.
const char *lt_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void lt_string_free(char *s);

// Creates an empty dataset.
struct LtDataset *lt_dataset_new(void);

// Parses a JSON array of records into a new dataset.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum LtStatus lt_dataset_from_json(const char *json, struct LtDataset **out);

// # Safety
// `ds` must come from this library and not have been freed.
void lt_dataset_free(struct LtDataset *ds);

// Number of records.
//
// # Safety
// `ds` must be a live dataset or null.
size_t lt_dataset_len(const struct LtDataset *ds);

// Adds a death at excess time `t` observable only within `[a, b]`.
//
// # Safety
// `ds` must be a live dataset.
enum LtStatus lt_dataset_push_truncated(struct LtDataset *ds,
                                        double t,
                                        double a,
                                        double b,
                                        double origin_age);

// Adds a record left-truncated at `a` and censored at `c`; `t > c` gives a
// censored record.
//
// # Safety
// `ds` must be a live dataset.
enum LtStatus lt_dataset_push_left_truncated(struct LtDataset *ds,
                                             double t,
                                             double a,
                                             double c,
                                             double origin_age);

// Fits `family` (e.g. `"exponential"`, `"gen_pareto"`) to the exceedances
// of `threshold`.
//
// # Safety
// `ds` must be a live dataset, `family` a NUL-terminated string and `out`
// a valid pointer.
enum LtStatus lt_fit(const struct LtDataset *ds,
                     const char *family,
                     double threshold,
                     struct LtFit **out);

// # Safety
// `fit` must come from this library and not have been freed.
void lt_fit_free(struct LtFit *fit);

// Estimate and standard error of parameter `name`; the standard error is
// NaN when unavailable.
//
// # Safety
// Pointers must be valid; `name` NUL-terminated.
enum LtStatus lt_fit_estimate(const struct LtFit *fit,
                              const char *name,
                              double *value,
                              double *std_error);

// Maximized log-likelihood, or NaN for a null handle.
//
// # Safety
// `fit` must be a live fit or null.
double lt_fit_loglik(const struct LtFit *fit);

// 1 if the optimizer converged, 0 otherwise.
//
// # Safety
// `fit` must be a live fit or null.
int32_t lt_fit_converged(const struct LtFit *fit);

// The fit as JSON; free with [`lt_string_free`].
//
// # Safety
// Pointers must be valid.
enum LtStatus lt_fit_to_json(const struct LtFit *fit, char **out);

// Upper endpoint `u - sigma/xi`; infinite for `xi >= 0`.
double lt_gp_endpoint(double u, double sigma, double xi);

// Survivor function at `t` of a parameter set given as JSON, e.g.
// `{"family": "exponential", "sigma": 1.38}`.
//
// # Safety
// `params_json` must be NUL-terminated and `out` valid.
enum LtStatus lt_survivor(const char *params_json, double t, double *out);

// Turnbull's nonparametric estimate as JSON; free with
// [`lt_string_free`].
//
// # Safety
// Pointers must be valid.
enum LtStatus lt_turnbull(const struct LtDataset *ds, char **out);

// Parametric-bootstrap likelihood ratio test of `null` within `alt`.
//
// # Safety
// Pointers must be valid; family names NUL-terminated.
enum LtStatus lt_bootstrap_lrt(const struct LtDataset *ds,
                               const char *null,
                               const char *alt,
                               double threshold,
                               size_t replicates,
                               uint64_t seed,
                               double *statistic,
                               double *p_asymptotic,
                               double *p_bootstrap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LONGTAIL_H */
