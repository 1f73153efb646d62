#ifndef CYCLIC_WAVEMAP_H
#define CYCLIC_WAVEMAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Nonlinearity families accepted by `cwm_transform_new`.
 */
typedef enum CwmFamily {
  /**
   * `param` is α.
   */
  CWM_FAMILY_EXAMPLE1 = 0,
  /**
   * `param` is ℓ.
   */
  CWM_FAMILY_EXAMPLE2 = 1,
  CWM_FAMILY_EXAMPLE3_U = 2,
  CWM_FAMILY_EXAMPLE3_V = 3,
  /**
   * `param` is α, `m` the exponent.
   */
  CWM_FAMILY_EXAMPLE4 = 4,
  /**
   * `param` is the tail exponent p.
   */
  CWM_FAMILY_POWER_TAIL = 5,
  CWM_FAMILY_ZERO = 6,
} CwmFamily;

typedef enum CwmHolds {
  CWM_HOLDS_YES = 0,
  CWM_HOLDS_NO = 1,
  CWM_HOLDS_UNDECIDED = 2,
} CwmHolds;

typedef enum CwmStatus {
  CWM_STATUS_OK = 0,
  CWM_STATUS_NULL_POINTER = 1,
  CWM_STATUS_VALIDATION = 2,
  CWM_STATUS_NUMERICAL = 3,
  CWM_STATUS_NOT_APPLICABLE = 4,
  CWM_STATUS_PANIC = 5,
} CwmStatus;

typedef enum CwmVerdict {
  CWM_VERDICT_DIVERGENT = 0,
  CWM_VERDICT_CONVERGENT = 1,
  CWM_VERDICT_INCONCLUSIVE = 2,
} CwmVerdict;

typedef struct CwmCertificate CwmCertificate;

typedef struct CwmCoefficient CwmCoefficient;

typedef struct CwmIntervals CwmIntervals;

typedef struct CwmTransform CwmTransform;

typedef struct CwmMonodromy {
  double b11;
  double b12;
  double b21;
  double b22;
} CwmMonodromy;

typedef struct CwmInterval {
  double lambda_lo;
  double lambda_hi;
  double max_abs_trace;
  double witness_lambda;
} CwmInterval;

typedef struct CwmNocVerdict {
  enum CwmVerdict forward;
  enum CwmVerdict backward;
  enum CwmHolds holds;
  double p_hat_fwd;
  double p_hat_bwd;
} CwmNocVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *cwm_last_error_message(void);

/**
 * `b(t) = √(1 + ε sin 2πt)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CwmStatus cwm_coefficient_sqrt_sin(double epsilon, struct CwmCoefficient **out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum CwmStatus cwm_coefficient_constant(double c, struct CwmCoefficient **out);

/**
 * Coefficient from `len` equispaced samples over one period.
 *
 * # Safety
 * `samples` must point to `len` doubles; `out` must be a valid pointer.
 */
enum CwmStatus cwm_coefficient_tabulated(const double *samples,
                                         size_t len,
                                         struct CwmCoefficient **out);

/**
 * # Safety
 * `b` must be null or a handle from this library, not yet freed.
 */
void cwm_coefficient_free(struct CwmCoefficient *b);

/**
 * # Safety
 * `b` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_coefficient_eval(const struct CwmCoefficient *b, double t, double *out);

/**
 * Monodromy matrix of the Hill equation at `lambda`.
 *
 * # Safety
 * `b` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_monodromy(const struct CwmCoefficient *b,
                             uint32_t n,
                             double lambda,
                             double tol,
                             struct CwmMonodromy *out);

/**
 * Instability intervals of the trace on `[lambda_min, lambda_max]`.
 *
 * # Safety
 * `b` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_scan_instability(const struct CwmCoefficient *b,
                                    uint32_t n,
                                    double lambda_min,
                                    double lambda_max,
                                    size_t grid_points,
                                    double tol,
                                    struct CwmIntervals **out);

/**
 * # Safety
 * `iv` must be a live handle.
 */
size_t cwm_intervals_len(const struct CwmIntervals *iv);

/**
 * # Safety
 * `iv` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_intervals_get(const struct CwmIntervals *iv,
                                 size_t index,
                                 struct CwmInterval *out);

/**
 * # Safety
 * `iv` must be null or a handle from this library, not yet freed.
 */
void cwm_intervals_free(struct CwmIntervals *iv);

/**
 * Builds `F = exp ∫f`, `G = ∫F` and its inverse for a named family.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CwmStatus cwm_transform_new(enum CwmFamily kind,
                                 double param,
                                 uint32_t m,
                                 double tol,
                                 struct CwmTransform **out);

/**
 * # Safety
 * `tp` must be null or a handle from this library, not yet freed.
 */
void cwm_transform_free(struct CwmTransform *tp);

/**
 * # Safety
 * `tp` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_transform_g(const struct CwmTransform *tp, double u, double *out);

/**
 * # Safety
 * `tp` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_transform_h(const struct CwmTransform *tp, double v, double *out);

/**
 * Two-sided divergence test of `∫F` out to `s_max`.
 *
 * # Safety
 * `tp` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_noc(const struct CwmTransform *tp,
                       double s_max,
                       double margin,
                       struct CwmNocVerdict *out);

/**
 * Searches for blow-up data of Sobolev size at most `delta`, trying the
 * witness of every interval in `iv`.
 *
 * # Safety
 * `tp`, `b` and `iv` must be live handles and `out` a valid pointer.
 */
enum CwmStatus cwm_certify_blowup(const struct CwmTransform *tp,
                                  const struct CwmCoefficient *b,
                                  const struct CwmIntervals *iv,
                                  uint32_t n,
                                  double delta,
                                  struct CwmCertificate **out);

/**
 * Crossing time of the certificate; fails with `NotApplicable` when the
 * trajectory never reaches the endpoint.
 *
 * # Safety
 * `cert` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_certificate_t_star(const struct CwmCertificate *cert, double *out);

/**
 * Certificate as a JSON string; release it with `cwm_string_free`.
 *
 * # Safety
 * `cert` must be a live handle and `out` a valid pointer.
 */
enum CwmStatus cwm_certificate_json(const struct CwmCertificate *cert, char **out);

/**
 * # Safety
 * `cert` must be null or a handle from this library, not yet freed.
 */
void cwm_certificate_free(struct CwmCertificate *cert);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void cwm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CYCLIC_WAVEMAP_H */
