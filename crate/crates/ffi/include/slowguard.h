/* C interface for the slowguard slow-rate DoS detection library. */

#ifndef SLOWGUARD_H
#define SLOWGUARD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code for every fallible call.
typedef enum SlowguardStatus {
  // The call succeeded.
  SLOWGUARD_STATUS_OK = 0,
  // A required pointer argument was null.
  SLOWGUARD_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SLOWGUARD_STATUS_INVALID_UTF8 = 2,
  // The file could not be read or written.
  SLOWGUARD_STATUS_IO = 3,
  // The capture, label, or configuration input could not be parsed.
  SLOWGUARD_STATUS_PARSE = 4,
  // The configuration was syntactically valid but unusable.
  SLOWGUARD_STATUS_INVALID_CONFIG = 5,
  // Scoring needs at least one labeled attacker and one benign client.
  SLOWGUARD_STATUS_DEGENERATE_CLASSES = 6,
  // An unexpected internal failure (including a caught panic).
  SLOWGUARD_STATUS_INTERNAL = 7,
} SlowguardStatus;

// Detection evaluation report (opaque).
typedef struct SlowguardReport SlowguardReport;

// Labeled packet trace (opaque).
typedef struct SlowguardTrace SlowguardTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the library version as a static NUL-terminated string.
const char *slowguard_version(void);

// Returns a static NUL-terminated description of a status code.
const char *slowguard_status_message(enum SlowguardStatus status);

// Reads a capture file into a new trace handle.
//
// `target_ip`/`target_port` select the protected service. `target_ip` may be
// null, in which case the target is taken from the label sidecar next to the
// capture (`<path>.labels.json`), which must then exist. When the sidecar
// exists its attacker labels are applied.
//
// On success writes a handle to `out`; release it with
// [`slowguard_trace_free`].
//
// # Safety
// `path` (and `target_ip` when non-null) must point to NUL-terminated
// strings, and `out` must be a valid pointer to writable memory.
enum SlowguardStatus slowguard_trace_read(const char *path,
                                          const char *target_ip,
                                          uint16_t target_port,
                                          struct SlowguardTrace **out);

// Releases a trace handle. Null is ignored.
//
// # Safety
// `trace` must be a handle returned by this library that has not already
// been freed.
void slowguard_trace_free(struct SlowguardTrace *trace);

// Writes the number of packets in the trace to `out`.
//
// # Safety
// `trace` must be a live handle from this library and `out` must be
// writable.
enum SlowguardStatus slowguard_trace_packet_count(const struct SlowguardTrace *trace,
                                                  uint64_t *out);

// Writes the number of distinct client addresses (observed plus labeled) to
// `out`.
//
// # Safety
// `trace` must be a live handle from this library and `out` must be
// writable.
enum SlowguardStatus slowguard_trace_client_count(const struct SlowguardTrace *trace,
                                                  uint64_t *out);

// Writes the number of labeled attacker addresses to `out`.
//
// # Safety
// `trace` must be a live handle from this library and `out` must be
// writable.
enum SlowguardStatus slowguard_trace_attacker_count(const struct SlowguardTrace *trace,
                                                    uint64_t *out);

// Replaces the trace's attacker labels with every client inside `cidr`
// (for example `"128.10.0.0/16"`).
//
// # Safety
// `trace` must be a live handle from this library and `cidr` must point to
// a NUL-terminated string.
enum SlowguardStatus slowguard_trace_label_block(struct SlowguardTrace *trace, const char *cidr);

// Runs one detection configuration over a labeled trace and writes a report
// handle to `out`.
//
// `config_json` is a JSON object such as
// `{"scheme":"lpr","thresholds":{"p":0.08},"include_handshake":false,"strikes":1}`.
//
// Release the report with [`slowguard_report_free`].
//
// # Safety
// `trace` must be a live handle from this library, `config_json` must point
// to a NUL-terminated string, and `out` must be writable.
enum SlowguardStatus slowguard_eval_run(const struct SlowguardTrace *trace,
                                        const char *config_json,
                                        struct SlowguardReport **out);

// Writes the report's confusion counts to the four out-pointers.
//
// # Safety
// `report` must be a live handle from this library and all four out-pointers
// must be writable.
enum SlowguardStatus slowguard_report_counts(const struct SlowguardReport *report,
                                             uint64_t *true_positives,
                                             uint64_t *false_positives,
                                             uint64_t *false_negatives,
                                             uint64_t *true_negatives);

// Writes the report's balanced accuracy to `out`.
//
// # Safety
// `report` must be a live handle from this library and `out` must be
// writable.
enum SlowguardStatus slowguard_report_bacc(const struct SlowguardReport *report, double *out);

// Serializes the full report as a JSON string and writes it to `out`.
// Release the string with [`slowguard_string_free`].
//
// # Safety
// `report` must be a live handle from this library and `out` must be
// writable.
enum SlowguardStatus slowguard_report_json(const struct SlowguardReport *report, char **out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `string` must have been returned by this library and not already freed.
void slowguard_string_free(char *string);

// Releases a report handle. Null is ignored.
//
// # Safety
// `report` must be a handle returned by this library that has not already
// been freed.
void slowguard_report_free(struct SlowguardReport *report);

// Computes balanced accuracy from raw confusion counts and writes it to
// `out`. Fails with `DegenerateClasses` when either class is empty.
//
// # Safety
// `out` must be a valid pointer to writable memory.
enum SlowguardStatus slowguard_balanced_accuracy(uint64_t true_positives,
                                                 uint64_t false_positives,
                                                 uint64_t false_negatives,
                                                 uint64_t true_negatives,
                                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLOWGUARD_H */
