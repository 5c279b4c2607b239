#ifndef DSE_H
#define DSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DseAlgorithm {
  DSE_ALGORITHM_RING = 0,
  DSE_ALGORITHM_DIRECT = 1,
  DSE_ALGORITHM_HALVING_DOUBLING = 2,
  DSE_ALGORITHM_DOUBLE_BINARY_TREE = 3,
} DseAlgorithm;

typedef enum DseCollective {
  DSE_COLLECTIVE_ALL_REDUCE = 0,
  DSE_COLLECTIVE_ALL_GATHER = 1,
  DSE_COLLECTIVE_REDUCE_SCATTER = 2,
  DSE_COLLECTIVE_ALL_TO_ALL = 3,
} DseCollective;

typedef enum DseObjective {
  DSE_OBJECTIVE_PERF_PER_BW = 0,
  DSE_OBJECTIVE_PERF_PER_COST = 1,
} DseObjective;

typedef enum DseStatus {
  DSE_STATUS_OK = 0,
  DSE_STATUS_NULL_POINTER = 1,
  DSE_STATUS_INVALID_UTF8 = 2,
  DSE_STATUS_INVALID_INPUT = 3,
  DSE_STATUS_BUFFER_TOO_SMALL = 4,
  DSE_STATUS_PANIC = 5,
} DseStatus;

/*
 Opaque evaluator handle.
 */
typedef struct DseEvaluator DseEvaluator;

/*
 Opaque schema handle.
 */
typedef struct DseSchema DseSchema;

/*
 Result of one evaluation. `latency` is seconds.
 */
typedef struct DseEvaluation {
  double reward;
  double latency;
  bool valid;
} DseEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the calling thread's last error message into `buf`. Returns the
 buffer size needed, including the terminator; 1 when there is none.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t dse_last_error_message(char *buf, size_t len);

/*
 Parse a schema document.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum DseStatus dse_schema_parse(const char *json, struct DseSchema **out);

/*
 Load a schema from a file path.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DseStatus dse_schema_load(const char *path, struct DseSchema **out);

/*
 # Safety
 `schema` must be null or a handle from `dse_schema_parse`/`dse_schema_load`
 not yet freed.
 */
void dse_schema_free(struct DseSchema *schema);

/*
 Number of action-vector slots.

 # Safety
 `schema` must be a live handle; `out` must be writable.
 */
enum DseStatus dse_schema_slot_count(const struct DseSchema *schema, size_t *out);

/*
 Point count as a decimal string; it can exceed 64 bits.

 # Safety
 `schema` must be a live handle; `buf` must be null or hold `len` bytes;
 `needed` may be null.
 */
enum DseStatus dse_schema_cardinality(const struct DseSchema *schema,
                                      bool constrained,
                                      char *buf,
                                      size_t len,
                                      size_t *needed);

/*
 Whether a design point (JSON object) satisfies every constraint.

 # Safety
 `schema` must be a live handle; `point_json` NUL-terminated; `valid`
 writable.
 */
enum DseStatus dse_schema_check_point(const struct DseSchema *schema,
                                      const char *point_json,
                                      bool *valid);

/*
 Build an evaluator for `schema` (copied) with a model and system given
 by built-in name or file path.

 # Safety
 `schema` must be a live handle; strings NUL-terminated; `out` writable.
 */
enum DseStatus dse_evaluator_new(const struct DseSchema *schema,
                                 const char *model,
                                 const char *system,
                                 enum DseObjective objective,
                                 struct DseEvaluator **out);

/*
 # Safety
 `evaluator` must be null or a live handle from `dse_evaluator_new`.
 */
void dse_evaluator_free(struct DseEvaluator *evaluator);

/*
 Set the per-NPU memory limit in GB (default 24).

 # Safety
 `evaluator` must be a live handle.
 */
enum DseStatus dse_evaluator_set_memory_limit(struct DseEvaluator *evaluator, double gigabytes);

/*
 Evaluate an action vector. An invalid point is not an error: it yields
 `valid = false` and reward 0.

 # Safety
 `evaluator` must be a live handle; `action` must point to `len` values;
 `out` writable.
 */
enum DseStatus dse_evaluate_action(const struct DseEvaluator *evaluator,
                                   const size_t *action,
                                   size_t len,
                                   struct DseEvaluation *out);

/*
 Evaluate a design point given as a JSON object.

 # Safety
 `evaluator` must be a live handle; `point_json` NUL-terminated; `out`
 writable.
 */
enum DseStatus dse_evaluate_point(const struct DseEvaluator *evaluator,
                                  const char *point_json,
                                  struct DseEvaluation *out);

/*
 Reward for latency (s) against per-dim bandwidths (GB/s).

 # Safety
 `bandwidth` must point to `len` values or be null with `len == 0`.
 */
double dse_reward_perf_per_bw(double latency, const double *bandwidth, size_t len);

double dse_reward_perf_per_cost(double latency, double network_cost);

/*
 One-dimension collective time in seconds. Bandwidth is bytes/s and
 latency seconds.

 # Safety
 `out` must be writable.
 */
enum DseStatus dse_collective_time(enum DseCollective pattern,
                                   enum DseAlgorithm algorithm,
                                   uint64_t npus,
                                   double payload_bytes,
                                   double link_bandwidth,
                                   double link_latency,
                                   uint32_t chunks,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSE_H */
