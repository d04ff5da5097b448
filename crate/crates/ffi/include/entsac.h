#ifndef ENTSAC_H
#define ENTSAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum EntsacStatus {
  ENTSAC_STATUS_OK = 0,
  ENTSAC_STATUS_NULL_POINTER = 1,
  ENTSAC_STATUS_INVALID_ARGUMENT = 2,
  ENTSAC_STATUS_CONFIG = 3,
  ENTSAC_STATUS_IO = 4,
  ENTSAC_STATUS_DIVERGED = 5,
  ENTSAC_STATUS_CHECKPOINT = 6,
  ENTSAC_STATUS_BUFFER_TOO_SMALL = 7,
  ENTSAC_STATUS_INTERNAL = 8,
  ENTSAC_STATUS_PANIC = 9,
} EntsacStatus;

/**
 * Trained agent plus the RNG used for sampled actions.
 */
typedef struct EntsacAgent EntsacAgent;

/**
 * Parsed experiment configuration.
 */
typedef struct EntsacConfig EntsacConfig;

/**
 * Output of [`entsac_oracle_report`].
 */
typedef struct EntsacOracleReport {
  /**
   * Constant per-step bonus `alpha * gamma * entropy`.
   */
  double bonus;
  /**
   * Exact dynamic-programming verdict.
   */
  bool survive_preferred;
  /**
   * `alpha * entropy > penalty`.
   */
  bool threshold_survive_preferred;
  double v0;
  double baseline_v0;
  /**
   * Greedy rollout length from node 0, and whether it terminated.
   */
  size_t rollout_steps;
  bool rollout_terminated;
  size_t baseline_rollout_steps;
  bool baseline_rollout_terminated;
} EntsacOracleReport;

/**
 * Output of [`entsac_run_experiment`].
 */
typedef struct EntsacRunSummary {
  size_t eval_points;
  double final_return;
  double final_success;
  double final_alpha;
  double final_expected_v;
  double max_train_expected_v;
} EntsacRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *entsac_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *entsac_version(void);

/**
 * `alpha * entropy > penalty`.
 */
bool entsac_inflation_threshold(double alpha, double entropy, double penalty);

/**
 * Solves the episodic chain with and without the bonus `alpha * gamma * entropy`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one report.
 */
enum EntsacStatus entsac_oracle_report(double alpha,
                                       double entropy,
                                       double penalty,
                                       double gamma,
                                       size_t horizon,
                                       struct EntsacOracleReport *out);

/**
 * Value-iteration values of the infinite-horizon chain with a constant
 * per-step bonus. Writes `len` values; `len` must equal the chain length (5).
 *
 * # Safety
 * `values` must be null or point to `len` writable doubles.
 */
enum EntsacStatus entsac_infinite_chain_values(double gamma,
                                               double bonus,
                                               double tolerance,
                                               double *values,
                                               size_t len);

/**
 * Parses config text (dotted `key = value` lines). An empty string gives
 * the chain defaults.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum EntsacStatus entsac_config_parse(const char *text, struct EntsacConfig **out);

/**
 * Applies one `key=value` override.
 *
 * # Safety
 * `config` must come from [`entsac_config_parse`]; `assignment` must be a
 * NUL-terminated string.
 */
enum EntsacStatus entsac_config_set(struct EntsacConfig *config, const char *assignment);

/**
 * # Safety
 * `config` must be null or come from [`entsac_config_parse`], and must not
 * be used afterwards.
 */
void entsac_config_free(struct EntsacConfig *config);

/**
 * Trains one seed, writing `seed_<N>.csv` and `seed_<N>.ckpt` into `out_dir`.
 *
 * # Safety
 * `config` must come from [`entsac_config_parse`]; `out_dir` must be a
 * NUL-terminated path; `summary` may be null.
 */
enum EntsacStatus entsac_run_experiment(const struct EntsacConfig *config,
                                        uint64_t seed,
                                        const char *out_dir,
                                        struct EntsacRunSummary *summary);

/**
 * Loads a checkpoint. `seed` seeds the RNG used for sampled actions.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EntsacStatus entsac_agent_load(const char *path, uint64_t seed, struct EntsacAgent **out);

/**
 * Observation size expected by [`entsac_agent_act`]; 0 for a null handle.
 *
 * # Safety
 * `agent` must be null or a live handle.
 */
size_t entsac_agent_obs_dim(const struct EntsacAgent *agent);

/**
 * Action size written by [`entsac_agent_act`]; 0 for a null handle.
 *
 * # Safety
 * `agent` must be null or a live handle.
 */
size_t entsac_agent_action_dim(const struct EntsacAgent *agent);

/**
 * Current temperature; NaN for a null handle.
 *
 * # Safety
 * `agent` must be null or a live handle.
 */
double entsac_agent_alpha(const struct EntsacAgent *agent);

/**
 * Chooses an action: the squashed mean if `deterministic`, otherwise a
 * sample. Optionally reports `log pi(a|s)`.
 *
 * # Safety
 * `obs` must point to `obs_len` doubles, `action` to `action_len` writable
 * doubles; `log_prob` may be null.
 */
enum EntsacStatus entsac_agent_act(struct EntsacAgent *agent,
                                   const double *obs,
                                   size_t obs_len,
                                   bool deterministic,
                                   double *action,
                                   size_t action_len,
                                   double *log_prob);

/**
 * # Safety
 * `agent` must be null or come from [`entsac_agent_load`], and must not be
 * used afterwards.
 */
void entsac_agent_free(struct EntsacAgent *agent);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENTSAC_H */
