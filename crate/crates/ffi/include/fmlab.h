#ifndef FMLAB_H
#define FMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_ARGUMENT = 2,
  FM_STATUS_PARSE_ERROR = 3,
  FM_STATUS_DIMENSION_MISMATCH = 4,
  FM_STATUS_SINGULAR_RESOLVENT = 5,
  FM_STATUS_OUTSIDE_SECTOR = 6,
  // A gap or coefficient condition does not hold.
  FM_STATUS_HYPOTHESIS_FAILED = 7,
  FM_STATUS_TOO_LARGE = 8,
  FM_STATUS_IO = 9,
  // A Rust panic was caught at the boundary.
  FM_STATUS_PANIC = 10,
} FmStatus;

// Opaque convolution kernel.
typedef struct FmKernel FmKernel;

// Opaque sectorial operator on `C^n`.
typedef struct FmOperator FmOperator;

typedef struct FmComplex {
  double re;
  double im;
} FmComplex;

// Norms of the parabolic solve; `ratio_c` is NaN when `f = 0`.
typedef struct FmParabolicReport {
  double residual;
  double norm_u_prime;
  double norm_conv_u_prime;
  double norm_au;
  double norm_conv_au;
  double norm_f;
  double ratio_c;
} FmParabolicReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fm_version(void);

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on this thread.
const char *fm_last_error_message(void);

// Parses the kernel grammar `zero`, `exp(m=..)`, `gauss(s=..)`, `sum(..)`.
//
// # Safety
// `input` must be a NUL-terminated string and `out` a valid pointer.
enum FmStatus fm_kernel_parse(const char *input, size_t dim, struct FmKernel **out);

// `k̂(ξ)` for `ξ ∈ R^dim`; `dim` must equal the kernel's dimension.
//
// # Safety
// `kernel` must come from [`fm_kernel_parse`]; `xi` must hold `dim` values.
enum FmStatus fm_kernel_transform(const struct FmKernel *kernel,
                                  const double *xi,
                                  size_t dim,
                                  struct FmComplex *out);

// # Safety
// `kernel` must be NULL or come from [`fm_kernel_parse`], and not be used afterwards.
void fm_kernel_free(struct FmKernel *kernel);

// Parses `laplacian(n=, length=, c=)`, `diag(..)`, `scalar(z)`, `identity(n=)`.
//
// # Safety
// `input` must be a NUL-terminated string and `out` a valid pointer.
enum FmStatus fm_operator_parse(const char *input, struct FmOperator **out);

// Dirichlet Laplacian on `(0, length)` with `n` interior points, plus `shift`.
//
// # Safety
// `out` must be a valid pointer.
enum FmStatus fm_operator_laplacian(size_t n, double length, double shift, struct FmOperator **out);

// # Safety
// `op` must come from an operator constructor; `out` must be valid.
enum FmStatus fm_operator_dim(const struct FmOperator *op, size_t *out);

// `out = (A + λ)^{-1} b` for `λ` in the operator's sector; `n` must equal its dimension.
//
// # Safety
// `b` and `out` must hold `n` values each.
enum FmStatus fm_operator_resolvent_apply(const struct FmOperator *op,
                                          struct FmComplex lambda,
                                          const struct FmComplex *b,
                                          struct FmComplex *out,
                                          size_t n);

// # Safety
// `op` must be NULL or come from an operator constructor, and not be used afterwards.
void fm_operator_free(struct FmOperator *op);

// Sets `*passes` to 1 when `1/q − 1/p <= 2/d`, else 0.
//
// # Safety
// `passes` must be a valid pointer.
enum FmStatus fm_check_gap(double q, double p, size_t d, int *passes);

// Solves `a0 u' + a1∗u' + b0 Au + b1∗Au = f` on `[−L, L)` with `n_t`
// points. `f` and `u_out` hold `n_t · dim(A)` values; norms are `L_p`.
// Returns `HypothesisFailed` when the coefficient condition fails.
//
// # Safety
// Handles must be valid; `f` and `u_out` must hold `n_t · dim(A)` values.
enum FmStatus fm_solve_parabolic(struct FmComplex a0,
                                 const struct FmKernel *a1,
                                 struct FmComplex b0,
                                 const struct FmKernel *b1,
                                 const struct FmOperator *op,
                                 const struct FmComplex *f,
                                 size_t n_t,
                                 double half_length,
                                 double p,
                                 struct FmComplex *u_out,
                                 struct FmParabolicReport *report);

// Monte-Carlo R-bound of `{z_k I}` on `C^n` for the given scalars.
//
// # Safety
// `values` must hold `count` entries and `estimate` must be valid.
enum FmStatus fm_rbound_scalars(const struct FmComplex *values,
                                size_t count,
                                size_t n,
                                double p,
                                size_t trials,
                                size_t draw_size,
                                uint64_t seed,
                                double *estimate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FMLAB_H */
