#ifndef SOAKSIM_H
#define SOAKSIM_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SOAKSIM_FIT_NO_SOAKING 1

#define SOAKSIM_FIT_NEGATIVE_RATE 2

typedef enum SoaksimStatus {
  SOAKSIM_STATUS_OK = 0,
  SOAKSIM_STATUS_NULL_POINTER = 1,
  SOAKSIM_STATUS_INVALID_ARGUMENT = 2,
  SOAKSIM_STATUS_INVALID_CONFIG = 3,
  SOAKSIM_STATUS_PARSE = 4,
  SOAKSIM_STATUS_RUNTIME = 5,
  SOAKSIM_STATUS_OUT_OF_RANGE = 6,
  SOAKSIM_STATUS_PANIC = 7,
} SoaksimStatus;

typedef enum SoaksimGridKind {
  SOAKSIM_GRID_KIND_IN_AGAR = 0,
  SOAKSIM_GRID_KIND_CONSUMED = 1,
} SoaksimGridKind;

/**
 * Opaque simulation configuration.
 */
typedef struct SoaksimConfig SoaksimConfig;

/**
 * Opaque result of the finite-volume solver.
 */
typedef struct SoaksimOracle SoaksimOracle;

/**
 * Opaque result of a particle simulation.
 */
typedef struct SoaksimRun SoaksimRun;

typedef struct SoaksimFit {
  double soaking_rate_m_s;
  double two_point_rate_m_s;
  double log_slope_per_s;
  double intercept_area_m2;
  double r_squared;
  /**
   * Bitwise OR of `SOAKSIM_FIT_*`.
   */
  uint32_t flags;
} SoaksimFit;

typedef struct SoaksimSample {
  double time_s;
  uint64_t released;
  uint64_t in_agar;
  uint64_t consumed;
} SoaksimSample;

typedef struct SoaksimEvent {
  double time_s;
  double x_m;
  double y_m;
} SoaksimEvent;

typedef struct SoaksimOracleSample {
  double time_s;
  double released_mol;
  double in_agar_mol;
  double consumed_mol;
  double residual_mol;
} SoaksimOracleSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes, into `buf`. Returns the full message length
 * excluding the terminator; pass `buf = NULL` to query it.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t soaksim_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *soaksim_version(void);

/**
 * Initial droplet height `V / A` in metres.
 *
 * # Safety
 * `out` must point to a writable `double`.
 */
enum SoaksimStatus soaksim_initial_height(double volume_m3, double area_m2, double *out);

/**
 * Moles released into the agar over `[0, t]` by a droplet of the given
 * volume, footprint radius, soaking rate and concentration (mol/m³).
 *
 * # Safety
 * `out` must point to a writable `double`.
 */
enum SoaksimStatus soaksim_cumulative_release(double volume_m3,
                                              double radius_m,
                                              double soaking_rate_m_s,
                                              double concentration_mol_m3,
                                              double t_s,
                                              double *out);

/**
 * Lawn consumption rate at `t_s`. Pass `cap_m_s = INFINITY` for no cap.
 *
 * # Safety
 * `out` must point to a writable `double`.
 */
enum SoaksimStatus soaksim_consumption_rate(double k0_m_s,
                                            double doubling_period_s,
                                            double cap_m_s,
                                            double t_s,
                                            double *out);

/**
 * Per-step surface absorption probability for rate `k`.
 *
 * # Safety
 * `out` must point to a writable `double`.
 */
enum SoaksimStatus soaksim_absorption_probability(double k_m_s,
                                                  double d_m2_s,
                                                  double dt_s,
                                                  double *out);

/**
 * Fits the soaking rate to `n` `(time, area)` samples.
 *
 * # Safety
 * `times_s` and `areas_m2` must point to `n` readable doubles and `out` to a
 * writable [`SoaksimFit`].
 */
enum SoaksimStatus soaksim_fit_soaking_rate(const double *times_s,
                                            const double *areas_m2,
                                            size_t n,
                                            double h0_m,
                                            struct SoaksimFit *out);

/**
 * Reference configuration with initial consumption rate `kb0_m_s`.
 *
 * # Safety
 * `out` must point to a writable handle pointer.
 */
enum SoaksimStatus soaksim_config_new(double kb0_m_s, struct SoaksimConfig **out);

/**
 * Parses a configuration in the command-line tool's TOML format.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable handle pointer.
 */
enum SoaksimStatus soaksim_config_from_toml(const char *text, struct SoaksimConfig **out);

/**
 * Sets one numeric config key, named as in the TOML format (for example
 * `end_time_s`, `time_step_s`, `particle_weight_mol`, `rng_seed`).
 *
 * # Safety
 * `config` must be a live handle and `key` a NUL-terminated string.
 */
enum SoaksimStatus soaksim_config_set_number(struct SoaksimConfig *config,
                                             const char *key,
                                             double value);

/**
 * Replaces the snapshot times.
 *
 * # Safety
 * `config` must be a live handle and `times_s` point to `n` doubles.
 */
enum SoaksimStatus soaksim_config_set_snapshot_times(struct SoaksimConfig *config,
                                                     const double *times_s,
                                                     size_t n);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum SoaksimStatus soaksim_config_set_bins(struct SoaksimConfig *config, size_t nx, size_t ny);

/**
 * Returns `Ok`, or `InvalidConfig` with every violation in the message.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum SoaksimStatus soaksim_config_validate(const struct SoaksimConfig *config);

/**
 * # Safety
 * `config` must be NULL or a handle not yet freed.
 */
void soaksim_config_free(struct SoaksimConfig *config);

/**
 * Validates `config` and runs the particle simulator with `workers`
 * threads (0 = all cores).
 *
 * # Safety
 * `config` must be a live handle and `out` a writable handle pointer.
 */
enum SoaksimStatus soaksim_run(const struct SoaksimConfig *config,
                               size_t workers,
                               struct SoaksimRun **out);

/**
 * Number of recorded time-series samples.
 *
 * # Safety
 * `run` must be a live handle.
 */
size_t soaksim_run_series_len(const struct SoaksimRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` a writable [`SoaksimSample`].
 */
enum SoaksimStatus soaksim_run_sample(const struct SoaksimRun *run,
                                      size_t index,
                                      struct SoaksimSample *out);

/**
 * # Safety
 * `run` must be a live handle.
 */
size_t soaksim_run_snapshot_count(const struct SoaksimRun *run);

/**
 * Copies snapshot `index` into `counts` (row-major, `nx * ny` values) and
 * reports its shape and time. Call with `counts = NULL` to query the shape.
 *
 * # Safety
 * `run` must be a live handle, `counts` NULL or `len` writable values, and
 * the remaining out pointers writable.
 */
enum SoaksimStatus soaksim_run_snapshot(const struct SoaksimRun *run,
                                        size_t index,
                                        enum SoaksimGridKind kind,
                                        uint64_t *counts,
                                        size_t len,
                                        size_t *nx,
                                        size_t *ny,
                                        double *time_s);

/**
 * Number of consumption events.
 *
 * # Safety
 * `run` must be a live handle.
 */
size_t soaksim_run_ledger_len(const struct SoaksimRun *run);

/**
 * Copies up to `len` consumption events, in time order, starting at
 * `first`. Returns the number copied.
 *
 * # Safety
 * `run` must be a live handle and `events` point to `len` writable entries.
 */
size_t soaksim_run_ledger(const struct SoaksimRun *run,
                          size_t first,
                          struct SoaksimEvent *events,
                          size_t len);

/**
 * # Safety
 * `run` must be NULL or a handle not yet freed.
 */
void soaksim_run_free(struct SoaksimRun *run);

/**
 * Solves `config` on an `n_r` by `n_z` grid.
 *
 * # Safety
 * `config` must be a live handle and `out` a writable handle pointer.
 */
enum SoaksimStatus soaksim_oracle_solve(const struct SoaksimConfig *config,
                                        size_t n_r,
                                        size_t n_z,
                                        double dt_pde_s,
                                        bool auto_shrink,
                                        struct SoaksimOracle **out);

/**
 * # Safety
 * `oracle` must be a live handle.
 */
size_t soaksim_oracle_series_len(const struct SoaksimOracle *oracle);

/**
 * # Safety
 * `oracle` must be a live handle and `out` a writable [`SoaksimOracleSample`].
 */
enum SoaksimStatus soaksim_oracle_sample(const struct SoaksimOracle *oracle,
                                         size_t index,
                                         struct SoaksimOracleSample *out);

/**
 * Time step the solver actually used, after any stability shrink.
 *
 * # Safety
 * `oracle` must be a live handle.
 */
double soaksim_oracle_dt(const struct SoaksimOracle *oracle);

/**
 * # Safety
 * `oracle` must be NULL or a handle not yet freed.
 */
void soaksim_oracle_free(struct SoaksimOracle *oracle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOAKSIM_H */
