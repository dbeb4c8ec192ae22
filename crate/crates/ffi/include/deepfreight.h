#ifndef DEEPFREIGHT_H
#define DEEPFREIGHT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DfStatus {
  DF_STATUS_OK = 0,
  DF_STATUS_NULL_ARGUMENT = 1,
  DF_STATUS_INVALID_UTF8 = 2,
  DF_STATUS_INVALID_INPUT = 3,
  DF_STATUS_CONFIG = 4,
  /**
   * The inputs were well-formed but violated a model contract.
   */
  DF_STATUS_DOMAIN = 5,
  DF_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  DF_STATUS_PANIC = 7,
} DfStatus;

typedef enum DfMatchMode {
  DF_MATCH_MODE_MULTI_TRANSFER = 0,
  DF_MATCH_MODE_SINGLE_TRUCK = 1,
} DfMatchMode;

typedef struct DfCheckpoint DfCheckpoint;

typedef struct DfGraph DfGraph;

typedef struct DfWorld DfWorld;

/**
 * One truck move: leave `from` at `depart_s`, arrive at `to` after `eta_s`.
 */
typedef struct DfDecision {
  size_t truck;
  size_t epoch;
  size_t from;
  size_t to;
  uint64_t depart_s;
  uint64_t eta_s;
} DfDecision;

typedef struct DfRequest {
  size_t id;
  size_t source;
  size_t destination;
  uint64_t size;
} DfRequest;

typedef struct DfMatchResult {
  bool matched;
  /**
   * Number of edges on the chosen path (0 when unmatched).
   */
  size_t hops;
  uint64_t added_cost_s;
} DfMatchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *df_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful call. The pointer stays valid until the next library call
 * on the same thread.
 */
const char *df_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library that has not
 * been freed yet.
 */
void df_string_free(char *s);

/**
 * Built-in ten-centre synthetic network.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum DfStatus df_world_sample(struct DfWorld **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum DfStatus df_world_from_json(const char *json, struct DfWorld **out);

/**
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum DfStatus df_world_num_locations(const struct DfWorld *world, size_t *out);

/**
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum DfStatus df_world_eta(const struct DfWorld *world, size_t from, size_t to, uint64_t *out);

/**
 * # Safety
 * `world` must be NULL or a handle from this library, freed at most once.
 */
void df_world_free(struct DfWorld *world);

/**
 * Empty dispatch graph over `num_locations` stops for `num_trucks`
 * trucks with the given capacities.
 *
 * # Safety
 * `capacities` must point to `num_trucks` values (it may be NULL when
 * `num_trucks` is 0); `out` must be writable.
 */
enum DfStatus df_graph_new(size_t num_locations,
                           const uint64_t *capacities,
                           size_t num_trucks,
                           struct DfGraph **out);

/**
 * # Safety
 * `graph` must be a live handle; `decision` must point to a valid value.
 */
enum DfStatus df_graph_add_decision(struct DfGraph *graph, const struct DfDecision *decision);

/**
 * # Safety
 * `graph` must be a live handle and `out` writable.
 */
enum DfStatus df_graph_num_edges(const struct DfGraph *graph, size_t *out);

/**
 * Remaining capacity of edge `edge` (edges are numbered in insertion
 * order).
 *
 * # Safety
 * `graph` must be a live handle and `out` writable.
 */
enum DfStatus df_graph_edge_remaining(const struct DfGraph *graph, size_t edge, uint64_t *out);

/**
 * Greedily matches one request, reserving capacity on success. An
 * unmatched request is not an error: `out->matched` is false.
 *
 * # Safety
 * `graph` must be a live handle, `request` valid and `out` writable.
 */
enum DfStatus df_graph_match_request(struct DfGraph *graph,
                                     const struct DfRequest *request,
                                     enum DfMatchMode mode,
                                     struct DfMatchResult *out);

/**
 * # Safety
 * `graph` must be NULL or a handle from this library, freed at most once.
 */
void df_graph_free(struct DfGraph *graph);

/**
 * Solves a routing instance given as JSON and returns the solution as
 * JSON (`status`, `objective`, `nodes`, nonzero `values` by name).
 * `max_nodes` of 0 keeps the default node budget.
 *
 * # Safety
 * `instance_json` must be a NUL-terminated string; `out_json` writable.
 * The returned string must be released with [`df_string_free`].
 */
enum DfStatus df_milp_solve_json(const char *instance_json, size_t max_nodes, char **out_json);

/**
 * LP-format text of the routing model of an instance.
 *
 * # Safety
 * As for [`df_milp_solve_json`].
 */
enum DfStatus df_milp_export_lp(const char *instance_json, char **out_lp);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` writable.
 */
enum DfStatus df_checkpoint_load(const char *path, struct DfCheckpoint **out);

/**
 * # Safety
 * `ckpt` must be NULL or a handle from this library, freed at most once.
 */
void df_checkpoint_free(struct DfCheckpoint *ckpt);

/**
 * Runs the learned dispatch plus rescue pipeline and returns the report
 * as JSON. `scenario_json` and `config_json` may be NULL for defaults.
 *
 * # Safety
 * Handles must be live; strings NUL-terminated or NULL; `out_json`
 * writable. Release the result with [`df_string_free`].
 */
enum DfStatus df_hybrid_run_json(const struct DfWorld *world,
                                 const struct DfCheckpoint *ckpt,
                                 const char *scenario_json,
                                 const char *config_json,
                                 char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEEPFREIGHT_H */
