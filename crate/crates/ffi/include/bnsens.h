#ifndef BNSENS_H
#define BNSENS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BnsStatus {
  BNS_STATUS_OK = 0,
  BNS_STATUS_NULL_POINTER = 1,
  BNS_STATUS_INVALID_UTF8 = 2,
  BNS_STATUS_PARSE_ERROR = 3,
  BNS_STATUS_INVALID_NETWORK = 4,
  BNS_STATUS_UNKNOWN_NAME = 5,
  BNS_STATUS_ZERO_PROBABILITY_EVIDENCE = 6,
  BNS_STATUS_FROZEN_PARAMETER = 7,
  BNS_STATUS_INVALID_ARGUMENT = 8,
  BNS_STATUS_BUFFER_TOO_SMALL = 9,
  BNS_STATUS_SAMPLING_FAILED = 10,
  BNS_STATUS_PANIC = 11,
} BnsStatus;

typedef enum BnsSampler {
  BNS_SAMPLER_LOGIC_REJECTION = 0,
  BNS_SAMPLER_LIKELIHOOD_WEIGHTING = 1,
} BnsSampler;

/**
 * Opaque network with its compiled inference structure.
 */
typedef struct BnsNetwork BnsNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a JSON document and returns a handle to its network, with table
 * rows rescaled to unit sums.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BnsStatus bns_network_from_json(const char *json, struct BnsNetwork **out);

/**
 * Handle to a bundled network; `"dyspnea"` is the only one.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BnsStatus bns_network_builtin(const char *name, struct BnsNetwork **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `net` must come from this library and not be used afterwards.
 */
void bns_network_free(struct BnsNetwork *net);

/**
 * Number of variables, or 0 for NULL.
 *
 * # Safety
 * `net` must be NULL or a live handle.
 */
size_t bns_network_len(const struct BnsNetwork *net);

/**
 * Canonical JSON document for the network.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum BnsStatus bns_network_to_json(const struct BnsNetwork *net, char **out);

/**
 * Replaces one raw parameter. Frozen entries are refused.
 *
 * # Safety
 * `net` must be a live handle and `param` a NUL-terminated string.
 */
enum BnsStatus bns_set_param(struct BnsNetwork *net, const char *param, double value);

/**
 * Writes `P(target | evidence)` into `probs`. `len` receives the number of
 * target states; if it exceeds `capacity` nothing is written and
 * `BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * Pointers must be valid; `probs` must hold `capacity` doubles.
 */
enum BnsStatus bns_query(const struct BnsNetwork *net,
                         const char *evidence,
                         const char *target,
                         double *probs,
                         size_t capacity,
                         size_t *len);

/**
 * `∂P(target = state | evidence) / ∂θ` for one parameter.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be valid.
 */
enum BnsStatus bns_sensitivity(const struct BnsNetwork *net,
                               const char *evidence,
                               const char *target,
                               const char *param,
                               const char *state,
                               double *out);

/**
 * Largest absolute sensitivity over the parameters of `node`.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be valid.
 */
enum BnsStatus bns_node_max(const struct BnsNetwork *net,
                            const char *evidence,
                            const char *target,
                            const char *node,
                            double *out);

/**
 * Full sensitivity report, or the per-node summary when `summary` is
 * true, as canonical JSON.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be valid.
 */
enum BnsStatus bns_sensitivities_json(const struct BnsNetwork *net,
                                      const char *evidence,
                                      const char *target,
                                      bool summary,
                                      char **out);

/**
 * Sampling estimates with standard errors as canonical JSON.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be valid.
 */
enum BnsStatus bns_mc_sensitivities_json(const struct BnsNetwork *net,
                                         const char *evidence,
                                         const char *target,
                                         enum BnsSampler method,
                                         uint64_t samples,
                                         uint64_t seed,
                                         char **out);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void bns_string_free(char *s);

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call into the library on the same thread.
 */
const char *bns_last_error(void);

/**
 * Static name of a status code.
 */
const char *bns_status_name(enum BnsStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BNSENS_H */
