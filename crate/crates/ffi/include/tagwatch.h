#ifndef TAGWATCH_H
#define TAGWATCH_H

/* Generated by cbindgen from the tagwatch-ffi crate. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this interface.
typedef enum {
  // The call succeeded.
  TW_STATUS_OK = 0,
  // A required pointer argument was NULL.
  TW_STATUS_NULL_ARGUMENT = 1,
  // An argument or configuration value was rejected.
  TW_STATUS_INVALID_ARGUMENT = 2,
  // Input text could not be parsed.
  TW_STATUS_PARSE_ERROR = 3,
  // The operating system reported an I/O failure.
  TW_STATUS_IO = 4,
  // A defect inside the library; please report it.
  TW_STATUS_INTERNAL = 5,
} TwStatus;

// Opaque handle to an immutable community dictionary.
typedef struct TwDictionary TwDictionary;

// Opaque handle to one streaming detection engine.
typedef struct TwEngine TwEngine;

// Engine settings. Obtain defaults from `tw_engine_config_default`,
// adjust, and pass to `tw_engine_new`.
typedef struct {
  // Deviation bin width in seconds; must be positive.
  int64_t bin_width;
  // Baseline learning window in seconds; must be positive.
  int64_t init_window;
  // Announcements required before a route enters the baseline; >= 1.
  uint64_t min_observations;
  // Absolute signal threshold; used when relative_threshold <= 0.
  uint64_t threshold;
  // Relative signal threshold in (0, 1]; <= 0 selects the absolute one.
  double relative_threshold;
  // Tolerated out-of-order arrival in seconds; must be >= 0.
  int64_t reorder_slack;
  // Whether collapsed AS-path changes count as deviations.
  bool detect_path_changes;
} TwEngineConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The library version as a static NUL-terminated string. Do not free.
const char *tw_version(void);

// Releases a string returned by this library. NULL is a no-op.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library and not yet
// freed.
void tw_string_free(char *s);

// A copy of the calling thread's last error message, or NULL when the
// last call on this thread succeeded. Free with `tw_string_free`.
char *tw_last_error_message(void);

// Loads a dictionary from a CSV file. On success writes a new handle to
// `out`; release it with `tw_dictionary_free`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for one
// write.
TwStatus tw_dictionary_load_path(const char *path, TwDictionary **out);

// Loads a dictionary from CSV text already in memory.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be valid for one
// write.
TwStatus tw_dictionary_load_string(const char *text, TwDictionary **out);

// Number of entries in the dictionary.
//
// # Safety
// `dict` must be a live handle; `out` must be valid for one write.
TwStatus tw_dictionary_len(const TwDictionary *dict, uint64_t *out);

// Resolves a comma-separated list of communities ("64500:666,65000:1")
// to a JSON array of meaning strings, written to `out`. Free the string
// with `tw_string_free`.
//
// # Safety
// `dict` must be a live handle; `communities` must be a NUL-terminated
// string; `out` must be valid for one write.
TwStatus tw_dictionary_annotate(const TwDictionary *dict, const char *communities, char **out);

// Releases a dictionary handle. NULL is a no-op. Engines created from
// the handle keep their own reference and stay valid.
//
// # Safety
// `dict` must be NULL or a live handle, which becomes invalid.
void tw_dictionary_free(TwDictionary *dict);

// The default engine configuration: 60 s bins, 3600 s learning window,
// 2 observations, absolute threshold 10, 30 s slack.
TwEngineConfig tw_engine_config_default(void);

// Creates an engine that learns its baseline from the stream head and
// then detects deviations. Release with `tw_engine_free`.
//
// # Safety
// `dict` must be a live handle; `cfg` must be NULL (defaults) or valid
// for one read; `out` must be valid for one write.
TwStatus tw_engine_new(const TwDictionary *dict, const TwEngineConfig *cfg, TwEngine **out);

// Feeds one NDJSON record. Lines that fail to parse are counted and
// dropped, not errors; emitted signals accumulate until drained.
//
// # Safety
// `engine` must be a live handle; `line` must be a NUL-terminated
// string.
TwStatus tw_engine_feed(TwEngine *engine, const char *line);

// Ends the stream: finalizes a still-learning baseline and closes all
// open bins; remaining signals become drainable.
//
// # Safety
// `engine` must be a live handle.
TwStatus tw_engine_finish(TwEngine *engine);

// Takes all buffered signals as NDJSON text (one JSON object per line,
// empty string when none) and clears the buffer. Free the string with
// `tw_string_free`.
//
// # Safety
// `engine` must be a live handle; `out` must be valid for one write.
TwStatus tw_engine_drain_signals(TwEngine *engine, char **out);

// Writes a JSON object with the engine's counters: records consumed,
// accepted, dropped, learned baseline size (null while learning),
// closed bins, deviating keys, emitted signals, and buffered signals.
// Free the string with `tw_string_free`.
//
// # Safety
// `engine` must be a live handle; `out` must be valid for one write.
TwStatus tw_engine_stats_json(const TwEngine *engine, char **out);

// Releases an engine handle. NULL is a no-op.
//
// # Safety
// `engine` must be NULL or a live handle, which becomes invalid.
void tw_engine_free(TwEngine *engine);

// Checks a comma-separated relationship word, origin first, against the
// valley-free rule ("customer,peer,provider"; "unknown" for unlabeled
// edges, which may take any role). Writes whether every completion
// violates the rule, plus the witness edge pair (origin-nearest first)
// or -1/-1 when not violating.
//
// # Safety
// `roles` must be a NUL-terminated string; the three out-pointers must
// each be valid for one write.
TwStatus tw_check_valley(const char *roles,
                         bool *out_violating,
                         int64_t *out_witness_near,
                         int64_t *out_witness_far);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAGWATCH_H */
