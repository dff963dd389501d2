#ifndef ERGOLAB_H
#define ERGOLAB_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum ErgolabStatus {
  ERGOLAB_STATUS_OK = 0,
  ERGOLAB_STATUS_NULL_POINTER = 1,
  ERGOLAB_STATUS_INVALID_ARGUMENT = 2,
  ERGOLAB_STATUS_DOMAIN = 3,
  ERGOLAB_STATUS_NUMERICAL = 4,
  ERGOLAB_STATUS_PANIC = 5,
} ErgolabStatus;

// Opaque spectral histogram.
typedef struct ErgolabHistogram ErgolabHistogram;

// Opaque operator model.
typedef struct ErgolabModel ErgolabModel;

// Output of the large-deviation bound.
typedef struct ErgolabBoundReport {
  double log_raw_bound;
  double raw_bound;
  double clamped_bound;
  bool vacuous;
} ErgolabBoundReport;

// Output of an adaptive quadrature.
typedef struct ErgolabQuadResult {
  double value;
  double err_est;
  bool converged;
  bool divergent;
  size_t subdivisions;
} ErgolabQuadResult;

// Resonance classification of a coupling.
typedef struct ErgolabLambdaClass {
  double lambda_bar;
  double distance;
  bool resonant;
} ErgolabLambdaClass;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Length in bytes of the last error message on this thread, including the
// terminating NUL; 0 when the last call succeeded.
size_t ergolab_last_error_length(void);

// Copies the last error message into `buf`, truncating to `len - 1` bytes.
// Returns the number of bytes written without the NUL, or -1 if `buf` is
// null or `len` is 0.
//
// # Safety
// `buf` must point to `len` writable bytes.
ptrdiff_t ergolab_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *ergolab_version(void);

// Reduces `x` to `[-π, π)`.
//
// # Safety
// `result` must be a valid pointer.
enum ErgolabStatus ergolab_reduce_angle(double x, double *result);

// Standard-map potential `V(n) = −cos x_n` along an orbit.
//
// # Safety
// `model` must be a valid pointer; the handle written there is released with
// [`ergolab_model_free`].
enum ErgolabStatus ergolab_model_stdmap(double lambda, struct ErgolabModel **model);

// Constant potential.
//
// # Safety
// See [`ergolab_model_stdmap`].
enum ErgolabStatus ergolab_model_constant(double value, double lambda, struct ErgolabModel **model);

// Periodic potential repeating `values[0..n]`.
//
// # Safety
// `values` must point to `n` doubles; see also [`ergolab_model_stdmap`].
enum ErgolabStatus ergolab_model_periodic(const double *values,
                                          size_t n,
                                          double lambda,
                                          struct ErgolabModel **model);

// i.i.d. potential uniform on `[lo, hi]`.
//
// # Safety
// See [`ergolab_model_stdmap`].
enum ErgolabStatus ergolab_model_iid_uniform(double lo,
                                             double hi,
                                             double lambda,
                                             struct ErgolabModel **model);

// Skew-shift potential on the `dim`-torus with rotation `rotation_alpha`.
//
// # Safety
// See [`ergolab_model_stdmap`].
enum ErgolabStatus ergolab_model_skewshift(size_t dim,
                                           double rotation_alpha,
                                           double lambda,
                                           struct ErgolabModel **model);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from an `ergolab_model_*` constructor and not be used
// afterwards.
void ergolab_model_free(struct ErgolabModel *model);

// Lyapunov exponent at each of `energies[0..n]`, averaged over `ensemble`
// orbits of `steps` steps. `stderr_out` may be null.
//
// # Safety
// `energies` and `gamma_out` (and `stderr_out` when non-null) must point to
// `n` doubles.
enum ErgolabStatus ergolab_lyapunov(const struct ErgolabModel *model,
                                    const double *energies,
                                    size_t n,
                                    uint64_t steps,
                                    uint64_t ensemble,
                                    uint64_t seed,
                                    double *gamma_out,
                                    double *stderr_out);

// Integrated density of states histogram from `ensemble` windows of `size`
// sites over `bins` equal bins of `[lo, hi]`.
//
// # Safety
// `model` and `hist` must be valid pointers; the handle written to `hist` is
// released with [`ergolab_histogram_free`].
enum ErgolabStatus ergolab_dos_histogram(const struct ErgolabModel *model,
                                         size_t size,
                                         uint64_t ensemble,
                                         double lo,
                                         double hi,
                                         size_t bins,
                                         uint64_t seed,
                                         struct ErgolabHistogram **hist);

// Number of bins.
//
// # Safety
// `hist` must be a valid handle or null (returns 0).
size_t ergolab_histogram_bins(const struct ErgolabHistogram *hist);

// Copies bin edges (`bins + 1` values) and masses (`bins` values). Either
// output may be null.
//
// # Safety
// Non-null outputs must have room for the stated counts.
enum ErgolabStatus ergolab_histogram_data(const struct ErgolabHistogram *hist,
                                          double *edges_out,
                                          double *mass_out);

// Logarithmic potential `∫ ln|E − E'| dN(E')`.
//
// # Safety
// `hist` and `result` must be valid pointers.
enum ErgolabStatus ergolab_log_potential(const struct ErgolabHistogram *hist,
                                         double e,
                                         double *result);

// Lyapunov exponent from the Thouless formula.
//
// # Safety
// `hist` and `result` must be valid pointers.
enum ErgolabStatus ergolab_thouless_gamma(const struct ErgolabHistogram *hist,
                                          double e,
                                          double lambda,
                                          double *result);

// Releases a histogram. Null is ignored.
//
// # Safety
// `hist` must come from [`ergolab_dos_histogram`] and not be used afterwards.
void ergolab_histogram_free(struct ErgolabHistogram *hist);

// Large-deviation bound on the measure of energies with small exponent.
//
// # Safety
// `report` must be a valid pointer.
enum ErgolabStatus ergolab_prop31_bound(double ln_lambda,
                                        double t,
                                        double xi,
                                        double delta,
                                        double g,
                                        struct ErgolabBoundReport *report);

// Resonance integral `K(λ, b, E, α)` with absolute tolerance `tol` (0 selects
// the default). A divergent integral is reported through
// `result->divergent` with status `Ok`.
//
// # Safety
// `result` must be a valid pointer.
enum ErgolabStatus ergolab_k_integral(double lambda,
                                      double b,
                                      double e,
                                      double alpha,
                                      double tol,
                                      struct ErgolabQuadResult *result);

// Classifies `lambda` as resonant when `min_o |λ − o| < λ^-delta_exp` modulo
// 2π, over `offsets[0..n]` (`n = 0` selects `{0, π}`).
//
// # Safety
// `offsets` must point to `n` doubles and `result` must be valid.
enum ErgolabStatus ergolab_classify_lambda(double lambda,
                                           double delta_exp,
                                           const double *offsets,
                                           size_t n,
                                           struct ErgolabLambdaClass *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERGOLAB_H */
