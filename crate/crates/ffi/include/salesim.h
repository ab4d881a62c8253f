#ifndef SALESIM_H
#define SALESIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Channel codes used across the ABI.
 */
#define SALESIM_ACTION_A 0

#define SALESIM_ACTION_B 1

#define SALESIM_ACTION_C 2

/**
 * Result code of every fallible call.
 */
typedef enum SalesimStatus {
  SALESIM_STATUS_OK = 0,
  SALESIM_STATUS_NULL_POINTER = 1,
  SALESIM_STATUS_INVALID_ARGUMENT = 2,
  SALESIM_STATUS_CONFIG = 3,
  SALESIM_STATUS_PARSE = 4,
  SALESIM_STATUS_IO = 5,
  SALESIM_STATUS_VERIFICATION = 6,
  SALESIM_STATUS_UNTRAINED = 7,
  SALESIM_STATUS_MISSING_KEY = 8,
  SALESIM_STATUS_INTERNAL = 9,
  SALESIM_STATUS_PANIC = 10,
} SalesimStatus;

/**
 * Incremental LinUCB learner.
 */
typedef struct SalesimLinUcb SalesimLinUcb;

/**
 * Outcome of one evaluation run.
 */
typedef struct SalesimResult SalesimResult;

/**
 * A realized simulation world.
 */
typedef struct SalesimWorld SalesimWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *salesim_version(void);

/**
 * Message of the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *salesim_last_error(void);

/**
 * Static name of a status code.
 */
const char *salesim_status_name(enum SalesimStatus status);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from this library and not yet freed.
 */
void salesim_string_free(char *s);

/**
 * Channel chosen by the fixed rule for a propensity estimate.
 */
uint32_t salesim_rule_based_choose(double fhat);

/**
 * Fit and realize a world. `config_toml` may be NULL for defaults; the
 * reference pool comes from the config's data section.
 *
 * # Safety
 * `config_toml` must be NULL or a NUL-terminated string; `out` must be writable.
 */
enum SalesimStatus salesim_world_new(const char *config_toml,
                                     uint64_t seed,
                                     struct SalesimWorld **out);

/**
 * Load a world from its JSON snapshot.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SalesimStatus salesim_world_from_json(const char *json, struct SalesimWorld **out);

/**
 * Serialize a world snapshot. Free the string with `salesim_string_free`.
 *
 * # Safety
 * `world` must be a live handle; `out` must be writable.
 */
enum SalesimStatus salesim_world_to_json(const struct SalesimWorld *world, char **out);

/**
 * Length of the context vectors this world produces.
 *
 * # Safety
 * `world` must be a live handle; `out` must be writable.
 */
enum SalesimStatus salesim_world_context_dim(const struct SalesimWorld *world, size_t *out);

/**
 * # Safety
 * `world` must be NULL or a live handle; it is invalid afterwards.
 */
void salesim_world_free(struct SalesimWorld *world);

/**
 * Collect logged data under `collection` (a scenario name such as
 * "observational", or NULL to skip the warm start) and run `policy`
 * (a kind name such as "lin_ucb") for `horizon_days`.
 *
 * # Safety
 * `world` must be a live handle; strings must be NUL-terminated or NULL
 * where allowed; `out` must be writable.
 */
enum SalesimStatus salesim_simulate(const struct SalesimWorld *world,
                                    const char *policy,
                                    const char *collection,
                                    uint32_t collection_days,
                                    uint32_t horizon_days,
                                    size_t leads_per_day,
                                    uint64_t seed,
                                    struct SalesimResult **out);

/**
 * Rewards observed by the end of the horizon.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum SalesimStatus salesim_result_cumulative_reward(const struct SalesimResult *result,
                                                    uint64_t *out);

/**
 * Number of allocation events (one per lead).
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum SalesimStatus salesim_result_event_count(const struct SalesimResult *result, size_t *out);

/**
 * Copy per-day observed rewards into `buf`. `*len` holds the capacity on
 * entry and the horizon on exit; a short buffer yields InvalidArgument
 * with `*len` set to the required size.
 *
 * # Safety
 * `result` must be a live handle; `buf` must hold `*len` values.
 */
enum SalesimStatus salesim_result_daily_rewards(const struct SalesimResult *result,
                                                uint64_t *buf,
                                                size_t *len);

/**
 * Recount the result from its event log. Verification on mismatch.
 *
 * # Safety
 * `result` must be a live handle.
 */
enum SalesimStatus salesim_result_verify(const struct SalesimResult *result);

/**
 * The result log as text. Free the string with `salesim_string_free`.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum SalesimStatus salesim_result_log(const struct SalesimResult *result, char **out);

/**
 * # Safety
 * `result` must be NULL or a live handle; it is invalid afterwards.
 */
void salesim_result_free(struct SalesimResult *result);

/**
 * New learner over `dim`-dimensional contexts with exploration weight `alpha`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SalesimStatus salesim_linucb_new(size_t dim, double alpha, struct SalesimLinUcb **out);

/**
 * Fold one observed (context, action, reward) triple into the learner.
 *
 * # Safety
 * `state` must be a live handle; `ctx` must hold `dim` values.
 */
enum SalesimStatus salesim_linucb_update(struct SalesimLinUcb *state,
                                         const double *ctx,
                                         size_t dim,
                                         uint32_t action,
                                         uint8_t reward);

/**
 * Upper-confidence scores for A, B and C into `scores[3]`.
 *
 * # Safety
 * `state` must be a live handle; `ctx` must hold `dim` values; `scores`
 * must hold three values.
 */
enum SalesimStatus salesim_linucb_scores(struct SalesimLinUcb *state,
                                         const double *ctx,
                                         size_t dim,
                                         double *scores);

/**
 * Highest-scoring channel; ties go to the earlier channel.
 *
 * # Safety
 * `state` must be a live handle; `ctx` must hold `dim` values.
 */
enum SalesimStatus salesim_linucb_choose(struct SalesimLinUcb *state,
                                         const double *ctx,
                                         size_t dim,
                                         uint32_t *action);

/**
 * Ridge coefficients of one arm into `theta[dim]`.
 *
 * # Safety
 * `state` must be a live handle; `theta` must hold `dim` values.
 */
enum SalesimStatus salesim_linucb_theta(struct SalesimLinUcb *state,
                                        uint32_t action,
                                        double *theta,
                                        size_t dim);

/**
 * # Safety
 * `state` must be NULL or a live handle; it is invalid afterwards.
 */
void salesim_linucb_free(struct SalesimLinUcb *state);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SALESIM_H */
