#ifndef BERGKIT_H
#define BERGKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BergkitStatus {
  BERGKIT_STATUS_OK = 0,
  BERGKIT_STATUS_NULL_POINTER = 1,
  BERGKIT_STATUS_INVALID_INPUT = 2,
  BERGKIT_STATUS_CONFIG = 3,
  BERGKIT_STATUS_NO_CONVERGENCE = 4,
  BERGKIT_STATUS_DOMAIN = 5,
  BERGKIT_STATUS_IO = 6,
  /**
   * A run finished but at least one check failed.
   */
  BERGKIT_STATUS_CHECKS_FAILED = 7,
  BERGKIT_STATUS_PANIC = 8,
} BergkitStatus;

/**
 * Generalised Bergman kernel assembled from a spectrum.
 */
typedef struct BergkitBergman BergkitBergman;

/**
 * Model kernel of one tangent space.
 */
typedef struct BergkitModelKernel BergkitModelKernel;

/**
 * Low spectrum of the lattice Laplacian on the torus.
 */
typedef struct BergkitSpectrum BergkitSpectrum;

/**
 * Toeplitz matrix in the cluster eigenbasis.
 */
typedef struct BergkitToeplitz BergkitToeplitz;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bergkit_version(void);

/**
 * Message of the last failure on this thread, or NULL. The caller owns
 * the string and releases it with [`bergkit_string_free`].
 */
char *bergkit_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void bergkit_string_free(char *s);

/**
 * Model kernel of the flat structure `g = I`, `omega = sum dx_k ^ dy_k`
 * in real dimension `2 n`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum BergkitStatus bergkit_model_kernel_standard(size_t n, struct BergkitModelKernel **out);

/**
 * Model kernel of the metric `g` and symplectic form `omega`, both
 * row-major `2n x 2n`.
 *
 * # Safety
 * `g` and `omega` must point to `4 n^2` doubles each; `out` must be
 * valid for a write.
 */
enum BergkitStatus bergkit_model_kernel_new(size_t n,
                                            const double *g,
                                            const double *omega,
                                            struct BergkitModelKernel **out);

/**
 * # Safety
 * `mk` must be NULL or a live handle.
 */
size_t bergkit_model_kernel_dim(const struct BergkitModelKernel *mk);

/**
 * `P(Z, Z')` for points of length `len = 2n`.
 *
 * # Safety
 * `mk` must be a live handle, `z` and `zp` must point to `len` doubles,
 * `re` and `im` must be valid for writes.
 */
enum BergkitStatus bergkit_model_kernel_eval(const struct BergkitModelKernel *mk,
                                             const double *z,
                                             const double *zp,
                                             size_t len,
                                             double *re,
                                             double *im);

/**
 * # Safety
 * `mk` must be NULL or a handle not freed before.
 */
void bergkit_model_kernel_free(struct BergkitModelKernel *mk);

/**
 * Lowest `count` eigenpairs of the renormalised Laplacian at tensor power
 * `p` on an `n x n` grid. `n = 0` picks the automatic grid and
 * `count = 0` means `p + 5`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum BergkitStatus bergkit_spectrum_solve(size_t p,
                                          size_t n,
                                          size_t count,
                                          struct BergkitSpectrum **out);

/**
 * # Safety
 * `sp` must be NULL or a live handle.
 */
size_t bergkit_spectrum_count(const struct BergkitSpectrum *sp);

/**
 * Size of the lowest eigenvalue cluster.
 *
 * # Safety
 * `sp` must be NULL or a live handle.
 */
size_t bergkit_spectrum_cluster_size(const struct BergkitSpectrum *sp);

/**
 * Copy the computed eigenvalues, ascending, into `buf` (`len` slots).
 *
 * # Safety
 * `sp` must be a live handle and `buf` must hold `len` doubles.
 */
enum BergkitStatus bergkit_spectrum_eigenvalues(const struct BergkitSpectrum *sp,
                                                double *buf,
                                                size_t len);

/**
 * # Safety
 * `sp` must be NULL or a handle not freed before.
 */
void bergkit_spectrum_free(struct BergkitSpectrum *sp);

/**
 * `P_{q,p}` from the cluster of `sp`. The spectrum handle may be freed
 * afterwards.
 *
 * # Safety
 * `sp` must be a live handle and `out` valid for a write.
 */
enum BergkitStatus bergkit_bergman_new(const struct BergkitSpectrum *sp,
                                       uint32_t q,
                                       struct BergkitBergman **out);

/**
 * Kernel value between lattice sites `s` and `t` (site `j + N k`).
 *
 * # Safety
 * `bk` must be a live handle, `re` and `im` valid for writes.
 */
enum BergkitStatus bergkit_bergman_value(const struct BergkitBergman *bk,
                                         size_t s,
                                         size_t t,
                                         double *re,
                                         double *im);

/**
 * `h^2 sum_x P(x, x)`; NaN for a NULL handle.
 *
 * # Safety
 * `bk` must be NULL or a live handle.
 */
double bergkit_bergman_trace(const struct BergkitBergman *bk);

/**
 * Operator norm of `Q^2 - Q` for `Q = h^2 P`; NaN for a NULL handle.
 *
 * # Safety
 * `bk` must be NULL or a live handle.
 */
double bergkit_bergman_projection_defect(const struct BergkitBergman *bk);

/**
 * # Safety
 * `bk` must be NULL or a handle not freed before.
 */
void bergkit_bergman_free(struct BergkitBergman *bk);

/**
 * Toeplitz matrix of the trigonometric symbol
 * `f(x, y) = sum_t amps[t] exp(2 pi i (m_t x + l_t y))`, with
 * `freqs = [m_0, l_0, m_1, l_1, ...]` and `amps = [re_0, im_0, ...]`.
 *
 * # Safety
 * `sp` must be a live handle, `freqs` and `amps` must point to
 * `2 * nterms` values each, `out` must be valid for a write.
 */
enum BergkitStatus bergkit_toeplitz_new(const struct BergkitSpectrum *sp,
                                        const int32_t *freqs,
                                        const double *amps,
                                        size_t nterms,
                                        struct BergkitToeplitz **out);

/**
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t bergkit_toeplitz_dim(const struct BergkitToeplitz *t);

/**
 * Copy the entries row-major as interleaved `(re, im)` pairs; `len` must
 * be at least `2 dim^2`.
 *
 * # Safety
 * `t` must be a live handle and `buf` must hold `len` doubles.
 */
enum BergkitStatus bergkit_toeplitz_entries(const struct BergkitToeplitz *t,
                                            double *buf,
                                            size_t len);

/**
 * Operator norm; NaN for a NULL handle.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
double bergkit_toeplitz_op_norm(const struct BergkitToeplitz *t);

/**
 * # Safety
 * `t` must be NULL or a handle not freed before.
 */
void bergkit_toeplitz_free(struct BergkitToeplitz *t);

/**
 * Run a batch config given as JSON text. `command` is one of the CLI
 * command names, or NULL to use the config's own. On `OK` and
 * `CHECKS_FAILED` the summary JSON is written to `summary_out` (owned by
 * the caller, see [`bergkit_string_free`]).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string, `command` NULL or one,
 * `summary_out` valid for a write.
 */
enum BergkitStatus bergkit_run(const char *config_json, const char *command, char **summary_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BERGKIT_H */
