#ifndef HMPC_H
#define HMPC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HmpcStatus {
    HMPC_STATUS_OK = 0,
    HMPC_STATUS_NULL_POINTER = 1,
    HMPC_STATUS_INVALID_ARGUMENT = 2,
    HMPC_STATUS_CONFIG = 3,
    HMPC_STATUS_SOLVER = 4,
    HMPC_STATUS_NUMERICAL = 5,
    HMPC_STATUS_PANIC = 6,
} HmpcStatus;

/**
 * Solver outcome of one step.
 */
typedef enum HmpcSolveStatus {
    HMPC_SOLVE_STATUS_SOLVED = 0,
    HMPC_SOLVE_STATUS_MAX_ITERATIONS = 1,
    HMPC_SOLVE_STATUS_INFEASIBLE_SUSPECTED = 2,
} HmpcSolveStatus;

/**
 * Opaque controller handle.
 */
typedef struct HmpcHandle HmpcHandle;

typedef struct HmpcStepInfo {
    double objective;
    size_t iterations;
    double solve_time_us;
    enum HmpcSolveStatus status;
    /**
     * Nonzero when the input comes from the shifted previous solution.
     */
    int32_t fallback;
} HmpcStepInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hmpc_version(void);

/**
 * Message of the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *hmpc_last_error(void);

/**
 * Controller for the plate with the default tuning. A reference must be
 * set before the first step.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum HmpcStatus hmpc_controller_new_ball_and_plate(struct HmpcHandle **out);

/**
 * Controller `label` of a scenario file, with the file's reference.
 *
 * # Safety
 * `toml` and `label` must be NUL-terminated strings; `out` must be writable.
 */
enum HmpcStatus hmpc_controller_from_toml(const char *toml,
                                          const char *label,
                                          struct HmpcHandle **out);

/**
 * Frees a handle; null is ignored.
 *
 * # Safety
 * `handle` must come from this library and not be used afterwards.
 */
void hmpc_controller_free(struct HmpcHandle *handle);

/**
 * State and input dimensions.
 *
 * # Safety
 * All pointers must be valid.
 */
enum HmpcStatus hmpc_controller_dims(const struct HmpcHandle *handle, size_t *nx, size_t *nu);

/**
 * Sets a harmonic reference at the controller frequency from its centre,
 * sine and cosine parameters (`nx` entries each for the state, `nu` for
 * the input). Clears the warm start.
 *
 * # Safety
 * Each array must hold the stated number of entries.
 */
enum HmpcStatus hmpc_controller_set_reference(struct HmpcHandle *handle,
                                              const double *x_center,
                                              const double *x_sine,
                                              const double *x_cosine,
                                              size_t nx,
                                              const double *u_center,
                                              const double *u_sine,
                                              const double *u_cosine,
                                              size_t nu);

/**
 * Computes the input for state `x` at time `t`.
 *
 * # Safety
 * `x` must hold `nx` entries, `u` must have room for `nu`, and `info` may
 * be null.
 */
enum HmpcStatus hmpc_controller_step(struct HmpcHandle *handle,
                                     int64_t t,
                                     const double *x,
                                     size_t nx,
                                     double *u,
                                     size_t nu,
                                     struct HmpcStepInfo *info);

/**
 * Forgets the warm start.
 *
 * # Safety
 * `handle` must be valid.
 */
enum HmpcStatus hmpc_controller_reset(struct HmpcHandle *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMPC_H */
