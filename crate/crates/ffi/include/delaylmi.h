/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef DELAYLMI_H
#define DELAYLMI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DelaylmiStatus {
  DELAYLMI_STATUS_OK = 0,
  DELAYLMI_STATUS_NULL_POINTER = 1,
  DELAYLMI_STATUS_INVALID_ARGUMENT = 2,
  // Dimensions of the supplied arrays do not fit together.
  DELAYLMI_STATUS_DIMENSION = 3,
  DELAYLMI_STATUS_SOLVER = 4,
  DELAYLMI_STATUS_NUMERICAL = 5,
  DELAYLMI_STATUS_IO = 6,
  // A panic was caught at the boundary; the library state is unchanged.
  DELAYLMI_STATUS_INTERNAL = 7,
} DelaylmiStatus;

// Analysis conditions to build.
typedef enum DelaylmiProblem {
  // One functional over the whole delay interval.
  DELAYLMI_PROBLEM_SINGLE_INTERVAL = 0,
  // Two functionals switched on the delay value.
  DELAYLMI_PROBLEM_SWITCHED = 1,
} DelaylmiProblem;

// Outcome of a feasibility problem.
typedef enum DelaylmiFeasibility {
  DELAYLMI_FEASIBILITY_FEASIBLE = 0,
  DELAYLMI_FEASIBILITY_INFEASIBLE = 1,
  DELAYLMI_FEASIBILITY_INCONCLUSIVE = 2,
} DelaylmiFeasibility;

// Result of an analysis, holding the certificate when one was found.
typedef struct DelaylmiAnalysis DelaylmiAnalysis;

// Result of an observer-based controller design.
typedef struct DelaylmiDesign DelaylmiDesign;

// A delay system `x(k+1) = A x(k) + A_n x(k−d_n) + A_d x(k−d(k))`.
typedef struct DelaylmiSystem DelaylmiSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *delaylmi_version(void);

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into the library on the same thread.
const char *delaylmi_last_error(void);

void delaylmi_clear_last_error(void);

// Creates a system from three `n × n` row-major matrices and the delay
// bounds `d_m ≤ d_n ≤ d_M`.
//
// # Safety
// `a`, `a_n` and `a_d` must each point to `n * n` doubles; `out` must be
// writable.
enum DelaylmiStatus delaylmi_system_new(size_t n,
                                        const double *a,
                                        const double *a_n,
                                        const double *a_d,
                                        size_t d_m,
                                        size_t d_n,
                                        size_t d_big,
                                        struct DelaylmiSystem **out);

// Builds the closed loop of a plant `(A_p, B_p)` with state dimension
// `n_p` and `m` inputs under the observer-based controller `(K, F, L)`.
// The loop state is the plant state followed by the estimation error.
//
// # Safety
// `a_p` holds `n_p * n_p` doubles, `b_p` `n_p * m`, `k` and `f` `m * n_p`,
// `l` `n_p * n_p`; `out` must be writable.
enum DelaylmiStatus delaylmi_system_from_plant(size_t n_p,
                                               size_t m,
                                               const double *a_p,
                                               const double *b_p,
                                               const double *k,
                                               const double *f,
                                               const double *l,
                                               size_t d_m,
                                               size_t d_n,
                                               size_t d_big,
                                               struct DelaylmiSystem **out);

// State dimension of a system, 0 for NULL.
//
// # Safety
// `sys` must be NULL or a live handle from this library.
size_t delaylmi_system_dim(const struct DelaylmiSystem *sys);

// # Safety
// `sys` must be NULL or a handle not yet freed.
void delaylmi_system_free(struct DelaylmiSystem *sys);

// Simulates the system for `horizon` steps.
//
// `history` holds `d_M + 1` samples of dimension `n`, newest first, and
// `delays` holds `horizon` delay values. The states `x(0), …, x(horizon)`
// are written to `states`, which must have room for `(horizon + 1) * n`
// doubles.
//
// # Safety
// All pointers must be valid for the sizes above.
enum DelaylmiStatus delaylmi_simulate(const struct DelaylmiSystem *sys,
                                      const double *history,
                                      const size_t *delays,
                                      size_t horizon,
                                      double *states,
                                      size_t states_len);

// Builds and solves the analysis conditions with default solver settings.
//
// # Safety
// `sys` must be a live handle and `out` writable.
enum DelaylmiStatus delaylmi_analyze(const struct DelaylmiSystem *sys,
                                     enum DelaylmiProblem problem,
                                     struct DelaylmiAnalysis **out);

// Verdict of an analysis; `Inconclusive` for NULL.
//
// # Safety
// `a` must be NULL or a live handle from `delaylmi_analyze`.
enum DelaylmiFeasibility delaylmi_analysis_feasibility(const struct DelaylmiAnalysis *a);

// Evaluates the certified functional of `mode` (1 or 2) on a history of
// `d_M + 1` samples, newest first. Only switched analyses carry a
// functional that can be evaluated.
//
// # Safety
// `history` must hold `(d_M + 1) * n` doubles and `value` be writable.
enum DelaylmiStatus delaylmi_analysis_functional(const struct DelaylmiAnalysis *a,
                                                 uint32_t mode,
                                                 const double *history,
                                                 double *value);

// # Safety
// `a` must be NULL or a handle not yet freed.
void delaylmi_analysis_free(struct DelaylmiAnalysis *a);

// Designs `K`, `F` and `L` for the plant so that the closed loop is
// certified for delays in `[d_m, d_M]` with nominal delay `d_n`. `epsilon`
// must lie in `(−1, 0]`. A finished solve yields a handle even when no
// gains were found; query it with [`delaylmi_design_feasibility`].
//
// # Safety
// `a_p` holds `n_p * n_p` doubles, `b_p` `n_p * m`; `out` must be writable.
enum DelaylmiStatus delaylmi_design(size_t n_p,
                                    size_t m,
                                    const double *a_p,
                                    const double *b_p,
                                    size_t d_m,
                                    size_t d_n,
                                    size_t d_big,
                                    double epsilon,
                                    struct DelaylmiDesign **out);

// `Feasible` only when gains were recovered and the closed loop passed
// re-analysis.
//
// # Safety
// `d` must be NULL or a live handle from `delaylmi_design`.
enum DelaylmiFeasibility delaylmi_design_feasibility(const struct DelaylmiDesign *d);

// Copies the recovered gains row-major into `k` and `f` (`m * n_p` each)
// and `l` (`n_p * n_p`).
//
// # Safety
// The buffers must be writable for the sizes above.
enum DelaylmiStatus delaylmi_design_gains(const struct DelaylmiDesign *d,
                                          double *k,
                                          double *f,
                                          double *l);

// # Safety
// `d` must be NULL or a handle not yet freed.
void delaylmi_design_free(struct DelaylmiDesign *d);

// Writes the analysis conditions of `sys` in SDPA sparse format. The
// string is owned by the caller and released with [`delaylmi_string_free`].
//
// # Safety
// `sys` must be a live handle and `out` writable.
enum DelaylmiStatus delaylmi_export_sdpa(const struct DelaylmiSystem *sys,
                                         enum DelaylmiProblem problem,
                                         char **out);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void delaylmi_string_free(char *s);

// Human-readable name of a status code as a static string.
const char *delaylmi_status_name(enum DelaylmiStatus s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELAYLMI_H */
