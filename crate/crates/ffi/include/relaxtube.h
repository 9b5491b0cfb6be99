#ifndef RELAXTUBE_H
#define RELAXTUBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtStatus {
  RT_STATUS_OK = 0,
  RT_STATUS_NULL_POINTER = 1,
  RT_STATUS_INVALID_UTF8 = 2,
  RT_STATUS_INVALID_INPUT = 3,
  RT_STATUS_PARSE = 4,
  RT_STATUS_NUMERIC = 5,
  RT_STATUS_VERIFICATION = 6,
  RT_STATUS_BUFFER_TOO_SMALL = 7,
  RT_STATUS_PANIC = 8,
} RtStatus;

/**
 * Set-valued right-hand side.
 */
typedef struct RtSetMap RtSetMap;

/**
 * Sampled trajectory.
 */
typedef struct RtTrajectory RtTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses equation text into a new map.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RtStatus rt_setmap_parse(const char *source, struct RtSetMap **out);

/**
 * One of `binary_switch`, `linear_decay`, `example41`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RtStatus rt_setmap_builtin(const char *name, struct RtSetMap **out);

/**
 * # Safety
 * `map` must come from this library and not be used afterwards; null is ignored.
 */
void rt_setmap_free(struct RtSetMap *map);

/**
 * # Safety
 * `map` and `out` must be valid pointers.
 */
enum RtStatus rt_setmap_dim(const struct RtSetMap *map, size_t *out);

/**
 * Writes the points of `F(t, x)` into `out` (capacity `cap` doubles) and their number
 * into `count`. With too small a buffer, `count` is still set and
 * `BufferTooSmall` returned.
 *
 * # Safety
 * `x` must hold `n` doubles, `out` `cap` doubles (may be null when `cap` is 0).
 */
enum RtStatus rt_setmap_eval(const struct RtSetMap *map,
                             double t,
                             const double *x,
                             size_t n,
                             double *out,
                             size_t cap,
                             size_t *count);

/**
 * Hausdorff distance of two point sets (or their hulls when the flag is nonzero;
 * both flags must agree).
 *
 * # Safety
 * `a` must hold `na * dim` doubles, `b` `nb * dim`, and `out` be valid.
 */
enum RtStatus rt_hausdorff(const double *a,
                           size_t na,
                           int a_convex,
                           const double *b,
                           size_t nb,
                           int b_convex,
                           size_t dim,
                           double *out);

/**
 * Euler integration on `[0, t_end]` with step `h`, always taking point `atom` of `F`.
 *
 * # Safety
 * `x0` must hold `n` doubles and `out` be valid.
 */
enum RtStatus rt_integrate_constant_atom(const struct RtSetMap *map,
                                         size_t atom,
                                         const double *x0,
                                         size_t n,
                                         double t_end,
                                         double h,
                                         struct RtTrajectory **out);

/**
 * # Safety
 * `traj` and `out` must be valid pointers.
 */
enum RtStatus rt_trajectory_len(const struct RtTrajectory *traj, size_t *out);

/**
 * # Safety
 * `traj` and `out` must be valid pointers.
 */
enum RtStatus rt_trajectory_dim(const struct RtTrajectory *traj, size_t *out);

/**
 * Node times, `len` doubles.
 *
 * # Safety
 * `out` must hold `cap` doubles.
 */
enum RtStatus rt_trajectory_times(const struct RtTrajectory *traj, double *out, size_t cap);

/**
 * Node states, `len * dim` doubles, row-major.
 *
 * # Safety
 * `out` must hold `cap` doubles.
 */
enum RtStatus rt_trajectory_states(const struct RtTrajectory *traj, double *out, size_t cap);

/**
 * # Safety
 * `traj` must come from this library and not be used afterwards; null is ignored.
 */
void rt_trajectory_free(struct RtTrajectory *traj);

/**
 * Escape and bounded-witness results for `eps` as JSON (escape horizon 3).
 *
 * # Safety
 * `json_out` must be a valid pointer; the string is released with `rt_string_free`.
 */
enum RtStatus rt_counterexample_run(double eps, double horizon, double h, char **json_out);

/**
 * Runs a scenario as the command-line tool would, writing artifacts into `out_dir`.
 * `exit_code` receives the tool's exit code and `report_json` the report; the
 * status is `Ok` whenever the report could be produced, even for failed runs.
 *
 * # Safety
 * String arguments must be NUL-terminated; `exit_code` and `report_json` valid.
 */
enum RtStatus rt_run_scenario_json(const char *task,
                                   const char *config_json,
                                   const char *out_dir,
                                   int *exit_code,
                                   char **report_json);

/**
 * Message of the last failed call on this thread, empty after a success.
 * Valid until the next call on the same thread.
 */
const char *rt_last_error_message(void);

/**
 * # Safety
 * `s` must be a string returned by this library; null is ignored.
 */
void rt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELAXTUBE_H */
