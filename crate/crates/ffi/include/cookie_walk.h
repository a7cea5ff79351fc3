#ifndef COOKIE_WALK_H
#define COOKIE_WALK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CwStatus {
  CW_STATUS_OK = 0,
  CW_STATUS_NULL_POINTER = 1,
  CW_STATUS_INVALID_UTF8 = 2,
  CW_STATUS_PARSE_ERROR = 3,
  CW_STATUS_INVALID_ARGUMENT = 4,
  CW_STATUS_STATE_BUDGET_EXCEEDED = 5,
  CW_STATUS_SINGULAR_SYSTEM = 6,
  CW_STATUS_PANIC = 7,
} CwStatus;

/**
 * An environment law.
 */
typedef struct CwLaw CwLaw;

/**
 * One walk replica together with its realized environment.
 */
typedef struct CwWalk CwWalk;

typedef struct CwExitAnalysis {
  double p_up;
  double expected_exit_position;
  double expected_consumed_drift;
  double expected_exit_time;
  double optional_stopping_residual;
  double solve_residual;
  uint64_t transient_states;
} CwExitAnalysis;

typedef struct CwLedger {
  uint64_t steps;
  int64_t position;
  /**
   * Drift consumed in total.
   */
  double consumed_drift;
  /**
   * Drift consumed at sites `>= 0`.
   */
  double consumed_drift_right;
  /**
   * `X_n - D_n`.
   */
  double martingale;
} CwLedger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *cw_last_error(void);

/**
 * Parses a law from its JSON form and stores a new handle in `*out`.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum CwStatus cw_law_from_json(const char *json, struct CwLaw **out);

/**
 * # Safety
 * `law` must be null or a handle from [`cw_law_from_json`] not yet freed.
 */
void cw_law_free(struct CwLaw *law);

/**
 * Expected total cookie drift per site.
 *
 * # Safety
 * `law` must be a live handle and `out` a valid pointer.
 */
enum CwStatus cw_law_delta(const struct CwLaw *law, double *out);

/**
 * Runs the assumption checks. `*all_passed` receives 1 or 0; when
 * `report` is non-null it receives a newly allocated text report to be
 * released with [`cw_string_free`].
 *
 * # Safety
 * `law` must be a live handle, `all_passed` a valid pointer and `report`
 * null or a valid pointer.
 */
enum CwStatus cw_law_validate(const struct CwLaw *law, int32_t *all_passed, char **report);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void cw_string_free(char *s);

/**
 * Solves an oracle instance given as JSON
 * (`{"interval": [x, z], "start": y, "background": ..., "stacks": ...}`).
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum CwStatus cw_oracle_solve_json(const char *json, struct CwExitAnalysis *out);

/**
 * Starts replica `replica_index` of `law` at `start`. The walk keeps its own
 * reference to the law, which may be freed afterwards.
 *
 * # Safety
 * `law` must be a live handle and `out` a valid pointer.
 */
enum CwStatus cw_walk_new(const struct CwLaw *law,
                          int64_t start,
                          uint64_t replica_index,
                          struct CwWalk **out);

/**
 * Advances the walk by `steps` steps.
 *
 * # Safety
 * `walk` must be a live handle.
 */
enum CwStatus cw_walk_step(struct CwWalk *walk, uint64_t steps);

/**
 * # Safety
 * `walk` must be a live handle and `out` a valid pointer.
 */
enum CwStatus cw_walk_position(const struct CwWalk *walk, int64_t *out);

/**
 * # Safety
 * `walk` must be a live handle and `out` a valid pointer.
 */
enum CwStatus cw_walk_ledger(const struct CwWalk *walk, struct CwLedger *out);

/**
 * # Safety
 * `walk` must be null or a handle from [`cw_walk_new`] not yet freed.
 */
void cw_walk_free(struct CwWalk *walk);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COOKIE_WALK_H */
