#ifndef NFTRACK_H
#define NFTRACK_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum NftStatus {
  NFT_STATUS_OK = 0,
  NFT_STATUS_NULL_POINTER = 1,
  NFT_STATUS_INVALID_UTF8 = 2,
  NFT_STATUS_CONFIG = 3,
  NFT_STATUS_DOMAIN = 4,
  NFT_STATUS_RUNTIME = 5,
  NFT_STATUS_IO = 6,
  NFT_STATUS_BUFFER_TOO_SMALL = 7,
  NFT_STATUS_PANIC = 8,
} NftStatus;

/**
 * Parsed scenario document.
 */
typedef struct NftScenario NftScenario;

/**
 * Per-symbol record of one run.
 */
typedef struct NftTrace NftTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *nft_last_error(void);

/**
 * Library version, static storage.
 */
const char *nft_version(void);

/**
 * Parses a scenario TOML document; an empty string gives the defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NftStatus nft_scenario_from_toml(const char *toml, struct NftScenario **out);

/**
 * Switches to the reduced desk-scale setup: 64 elements, 1 s runs.
 *
 * # Safety
 * `scenario` must come from [`nft_scenario_from_toml`].
 */
enum NftStatus nft_scenario_desk_scale(struct NftScenario *scenario);

/**
 * # Safety
 * `scenario` must be null or come from [`nft_scenario_from_toml`], and is
 * invalid afterwards.
 */
void nft_scenario_free(struct NftScenario *scenario);

/**
 * Runs one policy (`"ts"`, `"exploit"`, `"ekf"`, `"coherence"`, `"genie"`)
 * at one update interval and feedback ratio.
 *
 * # Safety
 * `scenario` must come from [`nft_scenario_from_toml`], `policy` must be a
 * NUL-terminated string and `out` a valid pointer.
 */
enum NftStatus nft_run(const struct NftScenario *scenario,
                       const char *policy,
                       uint64_t seed,
                       double interval_ms,
                       double feedback_ratio,
                       struct NftTrace **out);

/**
 * Number of symbols in the trace.
 *
 * # Safety
 * `trace` must come from [`nft_run`]; `out` must be valid.
 */
enum NftStatus nft_trace_len(const struct NftTrace *trace, size_t *out);

/**
 * Copies the per-symbol normalized gains into `buf`, which must hold at
 * least [`nft_trace_len`] values.
 *
 * # Safety
 * `trace` must come from [`nft_run`]; `buf` must point to `len` writable doubles.
 */
enum NftStatus nft_trace_gains(const struct NftTrace *trace, double *buf, size_t len);

/**
 * Mean normalized gain over the whole run.
 *
 * # Safety
 * `trace` must come from [`nft_run`]; `out` must be valid.
 */
enum NftStatus nft_trace_mean_gain(const struct NftTrace *trace, double *out);

/**
 * Writes the per-symbol CSV to `path`.
 *
 * # Safety
 * `trace` must come from [`nft_run`]; `path` must be a NUL-terminated string.
 */
enum NftStatus nft_trace_write_csv(const struct NftTrace *trace, const char *path);

/**
 * # Safety
 * `trace` must be null or come from [`nft_run`], and is invalid afterwards.
 */
void nft_trace_free(struct NftTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NFTRACK_H */
