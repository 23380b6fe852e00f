#ifndef QSYNC_H
#define QSYNC_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum QsyncStatus {
  QSYNC_STATUS_OK = 0,
  QSYNC_STATUS_NULL_POINTER = 1,
  QSYNC_STATUS_INVALID_ARGUMENT = 2,
  QSYNC_STATUS_CONFIG = 3,
  QSYNC_STATUS_SOLVER = 4,
  QSYNC_STATUS_CHECKPOINT = 5,
  QSYNC_STATUS_BUFFER_TOO_SMALL = 6,
  QSYNC_STATUS_PANIC = 7,
} QsyncStatus;

/**
 * Opaque simulation handle.
 */
typedef struct QsyncSimulation QsyncSimulation;

/**
 * Scalar observables of the current state.
 */
typedef struct QsyncSummary {
  double time;
  double zeta_norm;
  double min_corr;
  double theta_spread;
  double diameter;
} QsyncSummary;

/**
 * A complex number as two doubles.
 */
typedef struct QsyncComplex {
  double re;
  double im;
} QsyncComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Most recent error message on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *qsync_last_error_message(void);

/**
 * Static description of a status code.
 */
const char *qsync_status_string(enum QsyncStatus status);

/**
 * Number of catalog scenarios.
 */
size_t qsync_scenario_count(void);

/**
 * Name of catalog scenario `index` as a static nul-terminated string, or
 * null when out of range.
 */
const char *qsync_scenario_name(size_t index);

/**
 * Creates a simulation from a catalog scenario on the default 1D grid.
 *
 * # Safety
 * `name` must be a valid nul-terminated string and `out` a valid pointer.
 */
enum QsyncStatus qsync_simulation_from_scenario(const char *name,
                                                uint64_t seed,
                                                struct QsyncSimulation **out);

/**
 * Creates a simulation from a JSON run configuration.
 *
 * # Safety
 * `json` must be a valid nul-terminated string and `out` a valid pointer.
 */
enum QsyncStatus qsync_simulation_from_config(const char *json, struct QsyncSimulation **out);

/**
 * Releases a simulation. Null is ignored.
 *
 * # Safety
 * `sim` must be null or a handle from this library that was not freed yet.
 */
void qsync_simulation_free(struct QsyncSimulation *sim);

/**
 * Advances by `steps` time steps. On failure the state is left unchanged.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum QsyncStatus qsync_simulation_step(struct QsyncSimulation *sim, size_t steps);

/**
 * Number of oscillators.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum QsyncStatus qsync_simulation_oscillators(const struct QsyncSimulation *sim, size_t *out);

/**
 * Scalar observables of the current state.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum QsyncStatus qsync_simulation_summary(const struct QsyncSimulation *sim,
                                          struct QsyncSummary *out);

/**
 * Writes the L2 norms `|psi_j|` into `out[0..n]`.
 *
 * # Safety
 * `sim` must be a live handle and `out` must point to `len` writable doubles.
 */
enum QsyncStatus qsync_simulation_masses(const struct QsyncSimulation *sim,
                                         double *out,
                                         size_t len);

/**
 * Writes the consensus weights `theta_j` into `out[0..n]`.
 *
 * # Safety
 * `sim` must be a live handle and `out` must point to `len` writable doubles.
 */
enum QsyncStatus qsync_simulation_thetas(const struct QsyncSimulation *sim,
                                         double *out,
                                         size_t len);

/**
 * Serializes the state. `written` always receives the required size; when
 * `buf` is null or `cap` is too small nothing is copied and
 * `BufferTooSmall` is returned.
 *
 * # Safety
 * `sim` must be a live handle, `written` a valid pointer and `buf` null or
 * valid for `cap` bytes.
 */
enum QsyncStatus qsync_simulation_checkpoint(const struct QsyncSimulation *sim,
                                             uint8_t *buf,
                                             size_t cap,
                                             size_t *written);

/**
 * Replaces the state with a checkpoint. The grid and oscillator count must
 * match; on failure the state is left unchanged.
 *
 * # Safety
 * `sim` must be a live handle and `bytes` valid for `len` bytes.
 */
enum QsyncStatus qsync_simulation_restore(struct QsyncSimulation *sim,
                                          const uint8_t *bytes,
                                          size_t len);

/**
 * Reduced-model parameter `Lambda = 4 Omega l1 l2 / (k (l1^2 + l2^2))`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QsyncStatus qsync_lambda_param(double omega,
                                    double k,
                                    double lambda1,
                                    double lambda2,
                                    double *out);

/**
 * Stable and unstable fixed points of the reduced correlation equation.
 *
 * # Safety
 * `stable` and `unstable` must be valid pointers.
 */
enum QsyncStatus qsync_fixed_points(double lambda_cap,
                                    struct QsyncComplex *stable,
                                    struct QsyncComplex *unstable);

/**
 * Closed-form solution of the symmetric reduced system at time `t`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QsyncStatus qsync_y_exact(double t,
                               struct QsyncComplex y0,
                               double omega,
                               double lambda_cap,
                               struct QsyncComplex *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSYNC_H */
