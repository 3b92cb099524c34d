#ifndef ENVFORGE_H
#define ENVFORGE_H

/* Generated by cbindgen from crates/ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every FFI call.
enum EnvforgeStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  ENVFORGE_STATUS_OK = 0,
  // A required pointer argument was null.
  ENVFORGE_STATUS_NULL_ARG = 1,
  // A string argument was not valid UTF-8.
  ENVFORGE_STATUS_UTF8 = 2,
  // File could not be read.
  ENVFORGE_STATUS_IO = 3,
  // Input failed to parse or validate.
  ENVFORGE_STATUS_PARSE = 4,
  // World construction, synthesis, or replay failed.
  ENVFORGE_STATUS_BUILD = 5,
  // An index or identifier did not resolve.
  ENVFORGE_STATUS_NOT_FOUND = 6,
  // Internal panic; state may be inconsistent.
  ENVFORGE_STATUS_INTERNAL = 7,
};
#ifndef __cplusplus
typedef int32_t EnvforgeStatus;
#endif // __cplusplus

// One synthesized (or imported) verifiable task.
typedef struct EnvforgeTask EnvforgeTask;

// An executable world: one domain bundle per detected community.
typedef struct EnvforgeWorld EnvforgeWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null when the
// last call succeeded. The pointer stays valid until the next library
// call on the same thread.
const char *envforge_last_error(void);

// Library version as a static NUL-terminated string; never freed.
const char *envforge_version(void);

// Build a world from a JSONL tool-catalog file: ingest, similarity graph
// at threshold `tau`, community partition, dependency refinement, and
// per-domain schema derivation.
EnvforgeStatus envforge_world_build(const char *catalog_path,
                                    double tau,
                                    uint64_t seed,
                                    struct EnvforgeWorld **out_world);

// `envforge_world_build` over an in-memory JSONL catalog string.
EnvforgeStatus envforge_world_build_from_str(const char *catalog_jsonl,
                                             double tau,
                                             uint64_t seed,
                                             struct EnvforgeWorld **out_world);

// Number of domains in the world; 0 (with an error set) on a null handle.
size_t envforge_world_domain_count(const struct EnvforgeWorld *world);

// Identifier of the domain at `index` as a new string.
EnvforgeStatus envforge_world_domain_id(const struct EnvforgeWorld *world,
                                        size_t index,
                                        char **out_id);

// Synthesize the `index`-th verifiable task of the given seed series,
// assigning tasks to domains round-robin.
EnvforgeStatus envforge_task_synthesize(const struct EnvforgeWorld *world,
                                        uint64_t seed,
                                        size_t index,
                                        struct EnvforgeTask **out_task);

// Serialize a task to JSON (round-trips through `envforge_task_from_json`).
EnvforgeStatus envforge_task_to_json(const struct EnvforgeTask *task, char **out_json);

// Import a task previously serialized with `envforge_task_to_json`.
EnvforgeStatus envforge_task_from_json(const char *json, struct EnvforgeTask **out_task);

// Re-execute the task's golden actions from its seed state and verify
// statuses and the final digest.
EnvforgeStatus envforge_task_replay(const struct EnvforgeWorld *world,
                                    const struct EnvforgeTask *task);

// Run one deterministic episode (replay agent and scripted user revealing
// the intent in `chunks` turns) and return the trajectory as JSON.
EnvforgeStatus envforge_episode_run(const struct EnvforgeWorld *world,
                                    const struct EnvforgeTask *task,
                                    size_t chunks,
                                    char **out_trajectory_json);

// Validate a trajectory (as JSON) through the three-stage funnel with the
// default filter settings. `out_kept` receives 1 when the trajectory is
// kept, 0 otherwise. When `out_verdicts_json` is non-null it receives the
// full per-stage verdict record as JSON.
EnvforgeStatus envforge_trajectory_check(const struct EnvforgeWorld *world,
                                         const struct EnvforgeTask *task,
                                         const char *trajectory_json,
                                         int32_t *out_kept,
                                         char **out_verdicts_json);

// Release a string returned by this library. Null is ignored.
void envforge_string_free(char *s);

// Release a task handle. Null is ignored.
void envforge_task_free(struct EnvforgeTask *task);

// Release a world handle. Null is ignored.
void envforge_world_free(struct EnvforgeWorld *world);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENVFORGE_H */
