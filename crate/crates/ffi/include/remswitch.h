#ifndef REMSWITCH_H
#define REMSWITCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration value; the message names the field.
   */
  RS_STATUS_VALIDATION = 3,
  RS_STATUS_CONTRACT = 4,
  RS_STATUS_IO = 5,
  RS_STATUS_VERSION = 6,
  RS_STATUS_CORRUPT = 7,
  RS_STATUS_INVARIANT = 8,
  RS_STATUS_EMPTY_STATE = 9,
  RS_STATUS_OUT_OF_RANGE = 10,
  /**
   * Unexpected failure, including a caught panic.
   */
  RS_STATUS_INTERNAL = 11,
} RsStatus;

typedef enum RsStrategy {
  RS_STRATEGY_EPSILON_GREEDY = 0,
  RS_STRATEGY_UCB = 1,
  RS_STRATEGY_GRADIENT_BANDIT = 2,
  RS_STRATEGY_REM_EA = 3,
} RsStrategy;

typedef struct RsRemDb RsRemDb;

typedef struct RsReport RsReport;

typedef struct RsScenario RsScenario;

/**
 * Learner settings. Rewards and values are in bit/J times `reward_scale`.
 */
typedef struct RsLearnerConfig {
  enum RsStrategy strategy;
  double alpha;
  double xi;
  double beta;
  double c;
  double alpha_gb;
  double gamma;
  bool asr_enabled;
  double optimistic_init;
  double reward_scale;
  uint64_t rng_seed;
} RsLearnerConfig;

/**
 * Headline numbers of a run.
 */
typedef struct RsReportSummary {
  size_t episodes;
  size_t passes;
  /**
   * Unsettled runs count as `passes`.
   */
  size_t passes_to_converge;
  bool converged;
  /**
   * bit/J
   */
  double final_mean_reward;
  /**
   * W
   */
  double mean_power;
  /**
   * Fraction of the all-on power.
   */
  double energy_savings;
  size_t rem_entries;
} RsReportSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *rs_version(void);

/**
 * Message of the most recent failed call on this thread, or NULL.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rs_last_error_message(void);

void rs_clear_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void rs_string_free(char *s);

/**
 * The bundled desk-scale scenario.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum RsStatus rs_scenario_default(struct RsScenario **out);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RsStatus rs_scenario_from_toml(const char *toml, struct RsScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RsStatus rs_scenario_load(const char *path, struct RsScenario **out);

/**
 * # Safety
 * `s` must be NULL or a handle from this library, freed once.
 */
void rs_scenario_free(struct RsScenario *s);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RsStatus rs_scenario_n_bs(const struct RsScenario *s, size_t *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RsStatus rs_scenario_n_ue(const struct RsScenario *s, size_t *out);

/**
 * Network power in watts for an action (bit k = pico k+1, macro always on).
 *
 * # Safety
 * Pointers must be valid.
 */
enum RsStatus rs_scenario_total_power(const struct RsScenario *s, size_t action, double *out_w);

/**
 * Learner settings stored in the scenario file.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RsStatus rs_scenario_learner_config(const struct RsScenario *s, struct RsLearnerConfig *out);

/**
 * Built-in learner defaults.
 *
 * # Safety
 * `out` must be valid.
 */
enum RsStatus rs_learner_config_default(struct RsLearnerConfig *out);

/**
 * Runs a learner over the scenario's episode plan.
 *
 * `warm` may be NULL for a cold start; it is copied, not consumed.
 * `out_rem` may be NULL when the final REM is not needed.
 *
 * # Safety
 * Non-NULL pointers must be valid.
 */
enum RsStatus rs_run(const struct RsScenario *s,
                     const struct RsLearnerConfig *config,
                     const struct RsRemDb *warm,
                     struct RsReport **out_report,
                     struct RsRemDb **out_rem);

/**
 * # Safety
 * `r` must be NULL or a handle from this library, freed once.
 */
void rs_report_free(struct RsReport *r);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RsStatus rs_report_summary(const struct RsReport *r, struct RsReportSummary *out);

/**
 * Copies the action of each episode into `buf`.
 *
 * Writes at most `len` values; `out_total` receives the episode count, so a
 * first call with `len = 0` sizes the buffer.
 *
 * # Safety
 * `buf` must hold `len` values (may be NULL when `len` is 0).
 */
enum RsStatus rs_report_actions(const struct RsReport *r,
                                size_t *buf,
                                size_t len,
                                size_t *out_total);

/**
 * Copies the mean reward of each pass (bit/J); same sizing rule as
 * `rs_report_actions`.
 *
 * # Safety
 * `buf` must hold `len` values (may be NULL when `len` is 0).
 */
enum RsStatus rs_report_pass_rewards(const struct RsReport *r,
                                     double *buf,
                                     size_t len,
                                     size_t *out_total);

/**
 * Per-episode CSV report; release with `rs_string_free`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RsStatus rs_report_to_csv(const struct RsReport *r, char **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RsStatus rs_rem_load(const char *path, struct RsRemDb **out);

/**
 * # Safety
 * `db` must be a valid handle; `path` a NUL-terminated string.
 */
enum RsStatus rs_rem_save(const struct RsRemDb *db, const char *path);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RsStatus rs_rem_len(const struct RsRemDb *db, size_t *out);

/**
 * Greedy action and its value for one REM entry.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RsStatus rs_rem_greedy(const struct RsRemDb *db,
                            size_t entry,
                            size_t *out_action,
                            double *out_q);

/**
 * # Safety
 * `db` must be NULL or a handle from this library, freed once.
 */
void rs_rem_free(struct RsRemDb *db);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REMSWITCH_H */
