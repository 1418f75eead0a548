#ifndef DR_SPLITTING_H
#define DR_SPLITTING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Algorithm codes for [`DrSolverOptions::algorithm`].
 */
typedef enum DrAlgorithm {
  DR_ALGORITHM_PDR = 0,
  DR_ALGORITHM_RPDR = 1,
  DR_ALGORITHM_PDRQ = 2,
  DR_ALGORITHM_RPDRQ = 3,
  DR_ALGORITHM_SPDR = 4,
  DR_ALGORITHM_SRPDR = 5,
  DR_ALGORITHM_SPDRQ = 6,
  DR_ALGORITHM_SRPDRQ = 7,
  DR_ALGORITHM_PDHG = 8,
  DR_ALGORITHM_SPDHG = 9,
} DrAlgorithm;

/*
 Preconditioner codes for [`DrSolverOptions::precond`].
 */
typedef enum DrPrecond {
  DR_PRECOND_RICHARDSON = 0,
  DR_PRECOND_SGS_RED_BLACK = 1,
  DR_PRECOND_EXACT = 2,
} DrPrecond;

/*
 Reference methods for [`dr_problem_reference`].
 */
typedef enum DrRefMethod {
  DR_REF_METHOD_ORACLE = 0,
  DR_REF_METHOD_LONG_RUN = 1,
} DrRefMethod;

/*
 Result code of every fallible call.
 */
typedef enum DrStatus {
  DR_STATUS_OK = 0,
  DR_STATUS_NULL_POINTER = 1,
  DR_STATUS_INVALID_ARGUMENT = 2,
  DR_STATUS_PARSE = 3,
  DR_STATUS_CONFIG = 4,
  DR_STATUS_IO = 5,
  DR_STATUS_RUNTIME = 6,
  DR_STATUS_BUFFER_TOO_SMALL = 7,
  DR_STATUS_PANIC = 8,
} DrStatus;

/*
 A saddle-point problem.
 */
typedef struct DrProblem DrProblem;

/*
 A solver with its current iterate.
 */
typedef struct DrSolver DrSolver;

/*
 Solver settings. `algorithm` and `precond` take the values of
 [`DrAlgorithm`] and [`DrPrecond`]; `rho` applies to the relaxed
 algorithms only.
 */
typedef struct DrSolverOptions {
  int32_t algorithm;
  double sigma;
  double tau;
  int32_t precond;
  double rho;
  uint32_t sweeps;
  uint64_t seed;
} DrSolverOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *dr_version(void);

/*
 Copies the last error message of this thread into `buf` (truncated and
 NUL-terminated) and returns the buffer size needed for all of it.

 # Safety
 `buf` must be null or valid for `len` bytes.
 */
size_t dr_last_error(char *buf, size_t len);

/*
 The three-variable quadratic test problem with two dual blocks.

 # Safety
 `out` must be valid for writing a pointer.
 */
enum DrStatus dr_problem_tiny_qp(struct DrProblem **out);

/*
 Synthetic binary classification with `n` samples and `d` features.

 # Safety
 `out` must be valid for writing a pointer.
 */
enum DrStatus dr_problem_classification_synth(size_t n,
                                              size_t d,
                                              double separability,
                                              double lambda,
                                              uint64_t seed,
                                              struct DrProblem **out);

/*
 Classification from a LIBSVM file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be valid for
 writing a pointer.
 */
enum DrStatus dr_problem_classification_libsvm(const char *path,
                                               double lambda,
                                               struct DrProblem **out);

/*
 TGV-KL deblurring of a synthetic `d1 x d2` image under motion blur.

 # Safety
 `out` must be valid for writing a pointer.
 */
enum DrStatus dr_problem_tgv_kl_synth(size_t d1,
                                      size_t d2,
                                      size_t blur_length,
                                      double blur_angle,
                                      double alpha0,
                                      double alpha1,
                                      struct DrProblem **out);

/*
 Releases a problem; null is ignored.

 # Safety
 `p` must be null or a handle from a `dr_problem_*` constructor that was
 not freed before.
 */
void dr_problem_free(struct DrProblem *p);

/*
 Primal length, dual length and number of dual blocks.

 # Safety
 `p` must be a live handle; the outputs must be valid for writing.
 */
enum DrStatus dr_problem_dims(const struct DrProblem *p,
                              size_t *primal_len,
                              size_t *dual_len,
                              size_t *blocks);

/*
 Primal objective at `x` (`+inf` outside its domain).

 # Safety
 `p` must be a live handle, `x` valid for `len` reads and `value` for
 one write.
 */
enum DrStatus dr_problem_primal_value(const struct DrProblem *p,
                                      const double *x,
                                      size_t len,
                                      double *value);

/*
 Computes (or returns the stored) reference saddle point and its primal
 value. The long run uses over-relaxed PDR with step sizes `sigma`,
 `tau` and stops at certificate `tol` or after `budget` iterations.

 # Safety
 `p` must be a live handle; `x_out`/`y_out` valid for `x_len`/`y_len`
 writes; `primal` valid for one write.
 */
enum DrStatus dr_problem_reference(struct DrProblem *p,
                                   int32_t method,
                                   double sigma,
                                   double tau,
                                   size_t budget,
                                   double tol,
                                   double *x_out,
                                   size_t x_len,
                                   double *y_out,
                                   size_t y_len,
                                   double *primal);

/*
 Defaults for `algorithm`: unit step sizes, Richardson, `rho = 1.9`,
 one sweep, seed 5.
 */
struct DrSolverOptions dr_solver_options_default(int32_t algorithm);

/*
 Creates a solver at the zero iterate. The problem may be freed
 afterwards.

 # Safety
 `p` must be a live handle, `opts` valid for reading and `out` for
 writing a pointer.
 */
enum DrStatus dr_solver_new(const struct DrProblem *p,
                            const struct DrSolverOptions *opts,
                            struct DrSolver **out);

/*
 Performs `steps` iterations.

 # Safety
 `s` must be a live handle.
 */
enum DrStatus dr_solver_step(struct DrSolver *s, uint64_t steps);

/*
 Performs `epochs` epochs (one iteration each for deterministic
 algorithms, about `n` for the stochastic ones).

 # Safety
 `s` must be a live handle.
 */
enum DrStatus dr_solver_run_epochs(struct DrSolver *s, uint64_t epochs);

/*
 Number of iterations performed so far (0 for null).

 # Safety
 `s` must be null or a live handle.
 */
uint64_t dr_solver_iterations(const struct DrSolver *s);

/*
 Copies the current transitional pair (the solution estimate).

 # Safety
 `s` must be a live handle; `x_out`/`y_out` valid for `x_len`/`y_len`
 writes.
 */
enum DrStatus dr_solver_solution(const struct DrSolver *s,
                                 double *x_out,
                                 size_t x_len,
                                 double *y_out,
                                 size_t y_len);

/*
 Releases a solver; null is ignored.

 # Safety
 `s` must be null or a handle from [`dr_solver_new`] that was not freed
 before.
 */
void dr_solver_free(struct DrSolver *s);

/*
 Runs an experiment configuration file, writing below `output_root`.

 # Safety
 Both arguments must be NUL-terminated strings.
 */
enum DrStatus dr_run_experiment(const char *config_path, const char *output_root);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DR_SPLITTING_H */
