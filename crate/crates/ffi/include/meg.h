#ifndef MEG_H
#define MEG_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MegScheme {
  MEG_SCHEME_KEYED_HASH = 0,
  MEG_SCHEME_ED25519 = 1,
} MegScheme;

typedef enum MegStatus {
  MEG_STATUS_OK = 0,
  MEG_STATUS_NULL_POINTER = 1,
  MEG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Urn parameters outside the domain of the formulas.
   */
  MEG_STATUS_DOMAIN = 3,
  /**
   * The reference monitor refused an inbound envelope.
   */
  MEG_STATUS_REJECTED = 4,
  /**
   * Malformed wire bytes or scenario JSON.
   */
  MEG_STATUS_PARSE = 5,
  MEG_STATUS_BUFFER_TOO_SMALL = 6,
  MEG_STATUS_INTERNAL = 7,
} MegStatus;

typedef struct MegDirectory MegDirectory;

typedef struct MegReplica MegReplica;

/**
 * A byte buffer owned by the library. Release with [`meg_bytes_free`].
 */
typedef struct MegBytes {
  uint8_t *data;
  size_t len;
} MegBytes;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread. Valid until the next call
 * on the same thread.
 */
const char *meg_last_error(void);

/**
 * Static name of a status code.
 */
const char *meg_status_name(enum MegStatus status);

/**
 * # Safety
 * `out` must be valid for a write of one `double`.
 */
enum MegStatus meg_expected_removed(uint64_t u, uint64_t d, uint64_t k, double *out);

/**
 * # Safety
 * `out` must be valid for a write of one `double`.
 */
enum MegStatus meg_variance_removed(uint64_t u, uint64_t d, uint64_t k, double *out);

/**
 * Writes `P(R = j)` for `j = 0..=u` into `out`, which must hold at least
 * `u + 1` values.
 *
 * # Safety
 * `out` must be valid for `len` writes of `double`.
 */
enum MegStatus meg_pmf_removed(uint64_t u, uint64_t d, uint64_t k, double *out, size_t len);

/**
 * # Safety
 * `out` must be valid for a write of one `uint64_t`.
 */
enum MegStatus meg_fixed_point(uint64_t d, uint64_t k, uint64_t *out);

/**
 * # Safety
 * `out` must be valid for a write of one `uint64_t`.
 */
enum MegStatus meg_rounds_until_convergence(double u0, uint64_t d, uint64_t k, uint64_t *out);

/**
 * Creates a replica of room `room_id` whose key derives from the 32-byte
 * `key_seed`. Parent selection draws from a generator seeded with `rng_seed`.
 *
 * # Safety
 * `key_seed` must point to 32 readable bytes, `room_id` must be a
 * NUL-terminated string, and `out` must be valid for one pointer write.
 */
enum MegStatus meg_replica_new(enum MegScheme scheme,
                               const uint8_t *key_seed,
                               const char *room_id,
                               uint64_t rng_seed,
                               struct MegReplica **out);

/**
 * # Safety
 * `replica` must come from [`meg_replica_new`] and not be used afterwards.
 */
void meg_replica_free(struct MegReplica *replica);

/**
 * Writes the 32-byte replica id.
 *
 * # Safety
 * `replica` must be a live handle and `out` valid for 32 writes.
 */
enum MegStatus meg_replica_id(const struct MegReplica *replica, uint8_t *out);

/**
 * Number of forward extremities, or 0 for a null handle.
 *
 * # Safety
 * `replica` must be a live handle or null.
 */
size_t meg_replica_width(const struct MegReplica *replica);

/**
 * Number of applied vertices including the root, or 0 for a null handle.
 *
 * # Safety
 * `replica` must be a live handle or null.
 */
size_t meg_replica_len(const struct MegReplica *replica);

/**
 * Number of operations waiting for missing parents, or 0 for a null handle.
 *
 * # Safety
 * `replica` must be a live handle or null.
 */
size_t meg_replica_pending(const struct MegReplica *replica);

/**
 * Writes the 32-byte state digest.
 *
 * # Safety
 * `replica` must be a live handle and `out` valid for 32 writes.
 */
enum MegStatus meg_replica_digest(const struct MegReplica *replica, uint8_t *out);

/**
 * Creates, signs and applies an event with at most `cap` parents. The
 * wire form for broadcasting is written to `out`.
 *
 * # Safety
 * `replica` must be a live handle, `kind` a NUL-terminated string, `body`
 * valid for `body_len` reads, and `out` valid for one write.
 */
enum MegStatus meg_replica_create_event(struct MegReplica *replica,
                                        const char *kind,
                                        const uint8_t *body,
                                        size_t body_len,
                                        size_t cap,
                                        struct MegBytes *out);

/**
 * Passes wire bytes through the reference monitor and ingests them. Ops
 * with missing parents are buffered and still report `Ok`.
 *
 * # Safety
 * `replica` and `directory` must be live handles and `wire` valid for
 * `len` reads.
 */
enum MegStatus meg_replica_receive(struct MegReplica *replica,
                                   const struct MegDirectory *directory,
                                   const uint8_t *wire,
                                   size_t len);

/**
 * Builds the membership directory from `n` replica handles, tolerating
 * `f` faulty members.
 *
 * # Safety
 * `replicas` must point to `n` live handles and `out` be valid for one
 * pointer write.
 */
enum MegStatus meg_directory_new(const struct MegReplica *const *replicas,
                                 size_t n,
                                 size_t f,
                                 struct MegDirectory **out);

/**
 * # Safety
 * `directory` must come from [`meg_directory_new`] and not be used
 * afterwards.
 */
void meg_directory_free(struct MegDirectory *directory);

/**
 * # Safety
 * `bytes` must have been filled by this library and not freed before.
 */
void meg_bytes_free(struct MegBytes bytes);

/**
 * Runs a scenario given as JSON and writes a JSON run summary to `out`.
 * Release it with [`meg_string_free`]. A run whose verdicts fail still
 * returns `Ok`; inspect the summary.
 *
 * # Safety
 * `scenario_json` must be a NUL-terminated string and `out` valid for one
 * pointer write.
 */
enum MegStatus meg_run_scenario_json(const char *scenario_json, char **out);

/**
 * # Safety
 * `s` must come from this library and not be freed before.
 */
void meg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEG_H */
