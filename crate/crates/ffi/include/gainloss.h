#ifndef GAINLOSS_H
#define GAINLOSS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Which potential parameter a free variable refers to.
typedef enum GlParamKind {
  GL_PARAM_KIND_DEPTH = 0,
  GL_PARAM_KIND_GAIN_LOSS = 1,
} GlParamKind;

// Result of every fallible call.
typedef enum GlStatus {
  GL_STATUS_OK = 0,
  GL_STATUS_NULL_POINTER = 1,
  GL_STATUS_INVALID_ARGUMENT = 2,
  GL_STATUS_NUMERICAL_FAILURE = 3,
  GL_STATUS_INFEASIBLE = 4,
  GL_STATUS_BUFFER_TOO_SMALL = 5,
  GL_STATUS_PANIC = 6,
} GlStatus;

// Opaque multi-well potential.
typedef struct GlPotential GlPotential;

// Opaque solved spectrum.
typedef struct GlSpectrum GlSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread (empty if none). The pointer
// stays valid until the next failing call on the same thread.
const char *gl_last_error(void);

// Library version as a static NUL-terminated string.
const char *gl_version(void);

// Creates a potential of `n` Gaussian wells from parallel arrays.
//
// # Safety
// Each array must hold `n` readable values; `out` must be writable.
enum GlStatus gl_potential_new(size_t n,
                               const double *depth,
                               const double *gain_loss,
                               const double *width,
                               const double *center,
                               struct GlPotential **out);

// # Safety
// `p` must come from [`gl_potential_new`] and not be freed yet, or be NULL.
void gl_potential_free(struct GlPotential *p);

// Number of wells.
//
// # Safety
// `p` must be a live potential handle or NULL (returns 0).
size_t gl_potential_len(const struct GlPotential *p);

// Sets one parameter of well `well` (0-based).
//
// # Safety
// `p` must be a live potential handle.
enum GlStatus gl_potential_set(struct GlPotential *p,
                               enum GlParamKind kind,
                               size_t well,
                               double value);

// Solves for the `m` lowest states on `n_points` grid points spanning
// `[x_min, x_max]` with default tolerances.
//
// # Safety
// `p` must be a live potential handle; `out` must be writable.
enum GlStatus gl_spectrum_solve(const struct GlPotential *p,
                                double x_min,
                                double x_max,
                                size_t n_points,
                                size_t m,
                                struct GlSpectrum **out);

// # Safety
// `s` must come from [`gl_spectrum_solve`] and not be freed yet, or be NULL.
void gl_spectrum_free(struct GlSpectrum *s);

// Number of states held.
//
// # Safety
// `s` must be a live spectrum handle or NULL (returns 0).
size_t gl_spectrum_len(const struct GlSpectrum *s);

// Energy of state `i` (0-based, ascending real part).
//
// # Safety
// `s` must be a live spectrum handle; `re`, `im` must be writable.
enum GlStatus gl_spectrum_energy(const struct GlSpectrum *s, size_t i, double *re, double *im);

// Copies the wave function of state `i` on the interior grid points
// (`n_points - 2` values, L2-normalized) into `re` / `im`. With `len`
// too small, stores the required length in `*needed` and returns
// `BufferTooSmall`.
//
// # Safety
// `s` must be a live spectrum handle; `re`, `im` must hold `len` values;
// `needed` may be NULL.
enum GlStatus gl_spectrum_wavefunction(const struct GlSpectrum *s,
                                       size_t i,
                                       double *re,
                                       double *im,
                                       size_t len,
                                       size_t *needed);

// Effective matrix model: writes the `n` on-site energies and gain-loss
// terms and the tunneling rate (NaN for a single well).
//
// # Safety
// `p` must be a live potential handle; `epsilon`, `gamma` must hold `len`
// values; `j` must be writable.
enum GlStatus gl_matrix_model(const struct GlPotential *p,
                              double x_min,
                              double x_max,
                              size_t n_points,
                              double *epsilon,
                              double *gamma,
                              size_t len,
                              double *j);

// Solves for the `k` free parameters (`kinds[i]` of well `wells[i]`,
// 0-based) that make the lowest states real or conjugate pairs. `seed`
// may be NULL to seed from the matrix model (two wells with one free
// parameter, three wells with the three gain-loss terms). The potential
// itself is left unchanged.
//
// # Safety
// `p` must be a live potential handle; `kinds`, `wells`, `root` (and
// `seed` unless NULL) must hold `k` values; `residual_norm` may be NULL.
enum GlStatus gl_balance_solve(const struct GlPotential *p,
                               double x_min,
                               double x_max,
                               size_t n_points,
                               const enum GlParamKind *kinds,
                               const size_t *wells,
                               size_t k,
                               const double *seed,
                               double *root,
                               double *residual_norm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAINLOSS_H */
