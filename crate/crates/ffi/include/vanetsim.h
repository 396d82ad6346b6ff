#ifndef VANETSIM_H
#define VANETSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VanetStatus {
  VANET_STATUS_OK = 0,
  VANET_STATUS_NULL_ARGUMENT = 1,
  VANET_STATUS_INVALID_UTF8 = 2,
  VANET_STATUS_CONFIG_ERROR = 3,
  VANET_STATUS_RUNTIME_ERROR = 4,
  VANET_STATUS_OUT_OF_RANGE = 5,
  VANET_STATUS_PANIC = 6,
} VanetStatus;

typedef enum VanetProtocol {
  VANET_PROTOCOL_BASELINE = 0,
  VANET_PROTOCOL_HYBRID_VEHCLOUD = 1,
  VANET_PROTOCOL_DFCV = 2,
} VanetProtocol;

/**
 * Opaque scenario configuration.
 */
typedef struct VanetConfig VanetConfig;

/**
 * Opaque sweep result.
 */
typedef struct VanetSweep VanetSweep;

/**
 * One metrics row. Metrics that are undefined for the run (nothing sent
 * or nothing delivered) are NaN.
 */
typedef struct VanetRow {
  enum VanetProtocol protocol;
  uint32_t vehicle_count;
  uint64_t seed;
  double mean_e2e_delay_s;
  double delivery_probability;
  double plr;
  double avg_throughput_bps;
  uint64_t n_sent;
  uint64_t n_delivered;
  uint64_t n_lost;
} VanetRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The
 * pointer stays valid until the next call into this library.
 */
const char *vanet_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vanet_version(void);

/**
 * Parses and validates a JSON scenario document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VanetStatus vanet_config_from_json(const char *json, struct VanetConfig **out);

/**
 * Loads a JSON scenario file; relative paths inside resolve against its directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VanetStatus vanet_config_load(const char *path, struct VanetConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be freed twice. NULL is ignored.
 */
void vanet_config_free(struct VanetConfig *cfg);

/**
 * Runs every (protocol, density, seed) combination of the scenario.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum VanetStatus vanet_run_sweep(const struct VanetConfig *cfg,
                                 bool parallel,
                                 struct VanetSweep **out);

/**
 * Number of rows; 0 for NULL.
 *
 * # Safety
 * `sweep` must be NULL or a live sweep handle.
 */
size_t vanet_sweep_row_count(const struct VanetSweep *sweep);

/**
 * Copies row `index` (sorted by protocol name, vehicle count, seed).
 *
 * # Safety
 * `sweep` must be a live sweep handle and `out` a valid pointer.
 */
enum VanetStatus vanet_sweep_row(const struct VanetSweep *sweep,
                                 size_t index,
                                 struct VanetRow *out);

/**
 * Metrics CSV for the sweep, header included. Release with `vanet_string_free`.
 * Returns NULL if `sweep` is NULL.
 *
 * # Safety
 * `sweep` must be NULL or a live sweep handle.
 */
char *vanet_sweep_csv(const struct VanetSweep *sweep);

/**
 * # Safety
 * `sweep` must come from this library and not be freed twice. NULL is ignored.
 */
void vanet_sweep_free(struct VanetSweep *sweep);

/**
 * # Safety
 * `s` must be a string returned by this library. NULL is ignored.
 */
void vanet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VANETSIM_H */
