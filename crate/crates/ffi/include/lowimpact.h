/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef LOWIMPACT_H
#define LOWIMPACT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. The first four match the CLI exit codes.
typedef enum LiStatus {
  LI_STATUS_OK = 0,
  // Unknown measure, policy or condition name, or a bad setting.
  LI_STATUS_USAGE = 1,
  // The scenario failed to parse or validate.
  LI_STATUS_VALIDATION = 2,
  // A numeric failure such as conditioning on an impossible event.
  LI_STATUS_NUMERIC = 3,
  LI_STATUS_NULL_ARGUMENT = 4,
  LI_STATUS_INVALID_UTF8 = 5,
  LI_STATUS_IO = 6,
  // An internal error; the handle involved should not be reused.
  LI_STATUS_PANIC = 7,
} LiStatus;

// A loaded scenario.
typedef struct LiScenario LiScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a built-in scenario by name, or a TOML file by path.
//
// # Safety
// `name_or_path` must be a NUL-terminated string and `out` writable.
enum LiStatus li_scenario_load(const char *name_or_path, struct LiScenario **out);

// Parses a scenario from TOML text.
//
// # Safety
// `text` must be a NUL-terminated string and `out` writable.
enum LiStatus li_scenario_from_toml(const char *text, struct LiScenario **out);

// Releases a scenario. Null is ignored.
//
// # Safety
// `scenario` must come from this library and not be used afterwards.
void li_scenario_free(struct LiScenario *scenario);

// Sets the seed of both the planner and the detectability sampler.
//
// # Safety
// `scenario` must be a live handle.
enum LiStatus li_scenario_set_seed(struct LiScenario *scenario, uint64_t seed);

// Sets the Monte Carlo sample count of the detectability measure.
//
// # Safety
// `scenario` must be a live handle.
enum LiStatus li_scenario_set_samples(struct LiScenario *scenario, size_t samples);

// Writes the scenario as TOML to `*out`.
//
// # Safety
// `scenario` must be a live handle and `out` writable.
enum LiStatus li_scenario_to_toml(const struct LiScenario *scenario, char **out);

// Optimizes the planner agent and writes the run CSV to `*out_csv`.
//
// `measure` and `condition` may be null for the scenario defaults. A NaN
// `mu` uses the scenario's default weight; `sweep` non-zero uses its grid.
//
// # Safety
// Pointers must be null or valid as described; `out_csv` writable.
enum LiStatus li_run(const struct LiScenario *scenario,
                     const char *measure,
                     const char *condition,
                     double mu,
                     bool sweep,
                     char **out_csv);

// Evaluates one policy under several measures and writes the CSV.
//
// `measures` is comma-separated, or null for every measure; `policy` null
// means the null policy; `condition` null is the scenario default.
//
// # Safety
// Pointers must be null or valid as described; `out_csv` writable.
enum LiStatus li_compare(const struct LiScenario *scenario,
                         const char *measures,
                         const char *policy,
                         const char *condition,
                         char **out_csv);

// Conditional optima of every agent and their joint success probability.
// `measure` may be null and `mu` NaN for the scenario defaults;
// `out_p_success` may be null.
//
// # Safety
// Pointers must be null or valid as described; `out_csv` writable.
enum LiStatus li_joint(const struct LiScenario *scenario,
                       const char *measure,
                       double mu,
                       char **out_csv,
                       double *out_p_success);

// Baseline probability of the named announcement with every agent inactive.
//
// # Safety
// `scenario` must be a live handle, `event` a string, `out` writable.
enum LiStatus li_announcement_probability(const struct LiScenario *scenario,
                                          const char *event,
                                          double *out);

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next call into the library on this thread.
const char *li_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void li_string_free(char *s);

// Library version as a static string.
const char *li_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOWIMPACT_H */
