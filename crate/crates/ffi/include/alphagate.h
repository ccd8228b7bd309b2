#ifndef ALPHAGATE_H
#define ALPHAGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Verdict codes written by [`ag_protocol_run`]; identical to the CLI exit codes.
 */
#define AG_OUTCOME_DEPLOY 0

#define AG_OUTCOME_REJECT 2

#define AG_OUTCOME_REFACTOR 3

typedef enum AgStatus {
  AG_STATUS_OK = 0,
  AG_STATUS_NULL_POINTER = 1,
  AG_STATUS_INVALID_UTF8 = 2,
  AG_STATUS_INVALID_ARGUMENT = 3,
  AG_STATUS_DATA = 4,
  AG_STATUS_CONFIG = 5,
  AG_STATUS_PROTOCOL = 6,
  AG_STATUS_UNDEFINED = 7,
  AG_STATUS_PANIC = 8,
} AgStatus;

/**
 * Opaque bar series.
 */
typedef struct AgSeries AgSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread; empty after a successful call.
 * The pointer stays valid until the next call on this thread.
 */
const char *ag_last_error(void);

/**
 * Static version string.
 */
const char *ag_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void ag_string_free(char *s);

/**
 * Loads bars from a CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AgStatus ag_series_load_csv(const char *path, struct AgSeries **out);

/**
 * Generates a synthetic series from a JSON generator spec.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AgStatus ag_series_generate(const char *spec_json, uint64_t seed, struct AgSeries **out);

/**
 * Number of bars; 0 for a null handle.
 *
 * # Safety
 * `series` must be null or a live handle.
 */
uintptr_t ag_series_len(const struct AgSeries *series);

/**
 * # Safety
 * `series` must be null or a handle not yet freed.
 */
void ag_series_free(struct AgSeries *series);

/**
 * Runs the full protocol. On success `out_pack` receives the canonical
 * evidence pack (free with [`ag_string_free`]) and `out_outcome` one of
 * the `AG_OUTCOME_*` codes.
 *
 * # Safety
 * `series` must be a live handle, `config_json` a NUL-terminated string,
 * the out pointers valid.
 */
enum AgStatus ag_protocol_run(const struct AgSeries *series,
                              const char *config_json,
                              char **out_pack,
                              int32_t *out_outcome);

/**
 * Running-peak maximum drawdown of an equity curve, as a fraction.
 *
 * # Safety
 * `equity` must point to `len` doubles; `out` must be valid.
 */
enum AgStatus ag_max_drawdown(const double *equity, uintptr_t len, double *out);

/**
 * Annualized Sharpe of the log returns of an equity curve sampled
 * `periods_per_year` times a year.
 *
 * # Safety
 * `equity` must point to `len` doubles; `out` must be valid.
 */
enum AgStatus ag_sharpe(const double *equity, uintptr_t len, double periods_per_year, double *out);

/**
 * # Safety
 * `out` must be valid.
 */
enum AgStatus ag_cagr(double e_start, double e_end, double years, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALPHAGATE_H */
