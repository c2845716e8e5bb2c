#ifndef ETLPV_H
#define ETLPV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EtlpvStatus {
  ETLPV_STATUS_OK = 0,
  ETLPV_STATUS_NULL_POINTER = 1,
  ETLPV_STATUS_INVALID_UTF8 = 2,
  ETLPV_STATUS_CONFIG = 3,
  ETLPV_STATUS_DIMENSION = 4,
  ETLPV_STATUS_RANK_DEFICIENT = 5,
  ETLPV_STATUS_NUMERICAL = 6,
  ETLPV_STATUS_IO = 7,
  ETLPV_STATUS_PANIC = 8,
} EtlpvStatus;

// Parsed run configuration.
typedef struct EtlpvConfig EtlpvConfig;

// Outcome of a pipeline run.
typedef struct EtlpvReport EtlpvReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes, 0 if none.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t etlpv_last_error(char *buf, size_t len);

// Minimum experiment length for `n` states, `m` inputs and `l` scheduling
// parameters.
size_t etlpv_min_data_length(size_t n, size_t m, size_t l);

// Parse a JSON configuration document.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum EtlpvStatus etlpv_config_parse(const char *text, struct EtlpvConfig **out);

// Load a bundled example configuration (`1`, `2a`, `2b`, `3a`, `3b`).
//
// # Safety
// `id` must be a NUL-terminated string; `out` must be writable.
enum EtlpvStatus etlpv_config_bundled(const char *id, struct EtlpvConfig **out);

// # Safety
// `cfg` must be a live handle.
enum EtlpvStatus etlpv_config_set_seed(struct EtlpvConfig *cfg, uint64_t seed);

// The configuration as a JSON string; free with [`etlpv_string_free`].
//
// # Safety
// `cfg` must be a live handle.
char *etlpv_config_to_json(const struct EtlpvConfig *cfg);

// # Safety
// `cfg` must be null or a handle not yet freed.
void etlpv_config_free(struct EtlpvConfig *cfg);

// Run the tracking pipeline when the configuration has a tracking block,
// the stabilization pipeline otherwise. `out_dir` may be null to skip
// writing files. A failed stage or check still yields a report.
//
// # Safety
// `cfg` must be a live handle, `out_dir` null or NUL-terminated, `out`
// writable.
enum EtlpvStatus etlpv_run(const struct EtlpvConfig *cfg,
                           const char *out_dir,
                           struct EtlpvReport **out);

// Run a bundled example with its acceptance checks.
//
// # Safety
// `id` must be NUL-terminated, `out_dir` null or NUL-terminated, `out`
// writable.
enum EtlpvStatus etlpv_reproduce(const char *id, const char *out_dir, struct EtlpvReport **out);

// True when no stage and no check failed.
//
// # Safety
// `rep` must be a live handle.
bool etlpv_report_passed(const struct EtlpvReport *rep);

// Number of failed checks.
//
// # Safety
// `rep` must be a live handle.
size_t etlpv_report_failed_checks(const struct EtlpvReport *rep);

// Event transmissions of the simulated loop, or -1 when no simulation ran.
//
// # Safety
// `rep` must be a live handle.
int64_t etlpv_report_transmissions(const struct EtlpvReport *rep);

// The full report as JSON; free with [`etlpv_string_free`].
//
// # Safety
// `rep` must be a live handle.
char *etlpv_report_to_json(const struct EtlpvReport *rep);

// # Safety
// `rep` must be null or a handle not yet freed.
void etlpv_report_free(struct EtlpvReport *rep);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void etlpv_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ETLPV_H */
