#ifndef RADAU_GUIDANCE_H
#define RADAU_GUIDANCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define RG_METHOD_OC 0

#define RG_METHOD_DOC 1

#define RG_METHOD_OG 2

#define RG_METHOD_DOG 3

typedef enum RgStatus {
  RG_STATUS_OK = 0,
  RG_STATUS_NULL_POINTER = 1,
  RG_STATUS_INVALID_ARGUMENT = 2,
  RG_STATUS_NUMERICAL_FAILURE = 3,
  RG_STATUS_BUFFER_TOO_SMALL = 4,
  RG_STATUS_PANIC = 5,
} RgStatus;

/**
 * Example problem with its mesh, solver and guidance settings.
 */
typedef struct RgProblem RgProblem;

/**
 * A solved trajectory.
 */
typedef struct RgTrajectory RgTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Radau basis for `n` collocation points: `nodes[n]`, `weights[n]` and the
 * `n x (n + 1)` differentiation matrix in row-major order.
 *
 * # Safety
 * Each pointer must be valid for writes of its stated length.
 */
enum RgStatus rg_lgr_basis(size_t n,
                           double *nodes,
                           size_t nodes_len,
                           double *weights,
                           size_t weights_len,
                           double *diff,
                           size_t diff_len);

/**
 * Creates the built-in scalar example with nominal `alpha`, weights
 * `(beta, q)` and a graded mesh of `intervals` intervals of `order` points.
 * Guidance and solver settings take their defaults.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum RgStatus rg_problem_new_example(double alpha,
                                     double beta,
                                     double q,
                                     size_t intervals,
                                     size_t order,
                                     double grading,
                                     struct RgProblem **out);

/**
 * # Safety
 * `problem` must come from `rg_problem_new_example` and not be used afterwards.
 */
void rg_problem_free(struct RgProblem *problem);

/**
 * Solves the reference problem, with the sensitivity penalty when
 * `desensitized` is true.
 *
 * # Safety
 * `problem` must be a live handle; `out` valid for a pointer write.
 */
enum RgStatus rg_solve_reference(const struct RgProblem *problem,
                                 bool desensitized,
                                 struct RgTrajectory **out);

/**
 * # Safety
 * `traj` must come from `rg_solve_reference` and not be used afterwards.
 */
void rg_trajectory_free(struct RgTrajectory *traj);

/**
 * # Safety
 * `traj` must be a live handle; the outputs valid for writes.
 */
enum RgStatus rg_trajectory_dims(const struct RgTrajectory *traj,
                                 size_t *n_states,
                                 size_t *n_controls);

/**
 * # Safety
 * `traj` must be a live handle; the outputs valid for writes.
 */
enum RgStatus rg_trajectory_time_span(const struct RgTrajectory *traj, double *t0, double *tf);

/**
 * Objective value of the solved problem (penalty included).
 *
 * # Safety
 * `traj` must be a live handle; `out` valid for a write.
 */
enum RgStatus rg_trajectory_objective(const struct RgTrajectory *traj, double *out);

/**
 * Interpolated state at time `t`.
 *
 * # Safety
 * `traj` must be a live handle; `out` valid for `len` writes.
 */
enum RgStatus rg_trajectory_state_at(const struct RgTrajectory *traj,
                                     double t,
                                     double *out,
                                     size_t len);

/**
 * Interpolated control at time `t`.
 *
 * # Safety
 * `traj` must be a live handle; `out` valid for `len` writes.
 */
enum RgStatus rg_trajectory_control_at(const struct RgTrajectory *traj,
                                       double t,
                                       double *out,
                                       size_t len);

/**
 * Flies one mission (`RG_METHOD_*`) on the plant with parameter
 * `alpha_tilde`. Writes the first component of the terminal deviation,
 * the final state and the re-solve iteration total.
 *
 * # Safety
 * `problem` must be a live handle; the outputs valid for writes.
 */
enum RgStatus rg_run_mission(const struct RgProblem *problem,
                             uint32_t method,
                             double alpha_tilde,
                             double *epsilon,
                             double *final_state,
                             size_t final_state_len,
                             size_t *iterations);

/**
 * `runs` draws from `N(alpha, sigma^2)`, identical to a campaign's draws
 * for the same seed.
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum RgStatus rg_sample_alpha(uint64_t seed,
                              size_t runs,
                              double alpha,
                              double sigma,
                              double *out,
                              size_t len);

/**
 * Copies the calling thread's last error message, NUL-terminated, into
 * `buf`. `needed` (optional) receives the size including the terminator.
 *
 * # Safety
 * `buf` must be valid for `len` writes; `needed` null or valid for a write.
 */
enum RgStatus rg_last_error_message(char *buf, size_t len, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RADAU_GUIDANCE_H */
