// Copyright 2026 tagwatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! C interface to the stream engine and the community dictionary.
//!
//! Conventions: every fallible call returns a [`TwStatus`]; on anything
//! but `TW_STATUS_OK` a description is retrievable once per thread via
//! [`tw_last_error_message`]. Handles are opaque pointers created and
//! destroyed by this library; strings returned through out-parameters
//! are NUL-terminated, owned by the caller, and released with
//! [`tw_string_free`]. No call unwinds across the boundary: panics are
//! caught and reported as `TW_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use tagwatch::detector::{Signal, Threshold};
use tagwatch::dictionary::{Dictionary, RelationshipRole};
use tagwatch::pipeline::{EngineConfig, EngineError, StreamEngine};
use tagwatch::valleyfree::check_valley_free;
use tagwatch::Community;

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// An argument or configuration value was rejected.
    InvalidArgument = 2,
    /// Input text could not be parsed.
    ParseError = 3,
    /// The operating system reported an I/O failure.
    Io = 4,
    /// A defect inside the library; please report it.
    Internal = 5,
}

/// Opaque handle to an immutable community dictionary.
pub struct TwDictionary {
    inner: Arc<Dictionary>,
}

/// Opaque handle to one streaming detection engine.
pub struct TwEngine {
    engine: StreamEngine,
    signals: Vec<Signal>,
}

/// Engine settings. Obtain defaults from `tw_engine_config_default`,
/// adjust, and pass to `tw_engine_new`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TwEngineConfig {
    /// Deviation bin width in seconds; must be positive.
    pub bin_width: i64,
    /// Baseline learning window in seconds; must be positive.
    pub init_window: i64,
    /// Announcements required before a route enters the baseline; >= 1.
    pub min_observations: u64,
    /// Absolute signal threshold; used when relative_threshold <= 0.
    pub threshold: u64,
    /// Relative signal threshold in (0, 1]; <= 0 selects the absolute one.
    pub relative_threshold: f64,
    /// Tolerated out-of-order arrival in seconds; must be >= 0.
    pub reorder_slack: i64,
    /// Whether collapsed AS-path changes count as deviations.
    pub detect_path_changes: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let sanitized = msg.replace('\0', "?");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).ok();
    });
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn fail(status: TwStatus, msg: impl Into<String>) -> TwStatus {
    set_last_error(msg.into());
    status
}

/// Runs an API body with panic containment and a clean error slot.
fn guarded(f: impl FnOnce() -> TwStatus) -> TwStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(TwStatus::Internal, "panic inside tagwatch"),
    }
}

/// # Safety
/// `p` must be NULL or a NUL-terminated string valid for the call.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, TwStatus> {
    if p.is_null() {
        return Err(fail(TwStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(TwStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

/// # Safety
/// `out` must be NULL or valid for one write.
unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> TwStatus {
    if out.is_null() {
        return fail(TwStatus::NullArgument, format!("{name} is NULL"));
    }
    out.write(value);
    TwStatus::Ok
}

fn string_to_c(s: String) -> *mut c_char {
    // Serialized JSON never contains NUL (control characters are escaped),
    // so this only trips on non-JSON text, where '?' is an honest stand-in.
    CString::new(s.replace('\0', "?"))
        .expect("NUL stripped")
        .into_raw()
}

/// The library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn tw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn tw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A copy of the calling thread's last error message, or NULL when the
/// last call on this thread succeeded. Free with `tw_string_free`.
#[no_mangle]
pub extern "C" fn tw_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

// ---------------------------------------------------------- dictionary

/// Loads a dictionary from a CSV file. On success writes a new handle to
/// `out`; release it with `tw_dictionary_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn tw_dictionary_load_path(
    path: *const c_char,
    out: *mut *mut TwDictionary,
) -> TwStatus {
    guarded(|| {
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(TwStatus::NullArgument, "out is NULL");
        }
        match Dictionary::load_path(path) {
            Ok(dict) => {
                let handle = Box::new(TwDictionary { inner: Arc::new(dict) });
                write_out(out, Box::into_raw(handle), "out")
            }
            Err(err) => {
                let status = match &err {
                    tagwatch::dictionary::DictionaryError::Io(_) => TwStatus::Io,
                    _ => TwStatus::ParseError,
                };
                fail(status, format!("{path}: {err}"))
            }
        }
    })
}

/// Loads a dictionary from CSV text already in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn tw_dictionary_load_string(
    text: *const c_char,
    out: *mut *mut TwDictionary,
) -> TwStatus {
    guarded(|| {
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(TwStatus::NullArgument, "out is NULL");
        }
        match Dictionary::load(text.as_bytes()) {
            Ok(dict) => {
                let handle = Box::new(TwDictionary { inner: Arc::new(dict) });
                write_out(out, Box::into_raw(handle), "out")
            }
            Err(err) => fail(TwStatus::ParseError, err.to_string()),
        }
    })
}

/// Number of entries in the dictionary.
///
/// # Safety
/// `dict` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tw_dictionary_len(
    dict: *const TwDictionary,
    out: *mut u64,
) -> TwStatus {
    guarded(|| {
        let Some(dict) = dict.as_ref() else {
            return fail(TwStatus::NullArgument, "dict is NULL");
        };
        write_out(out, dict.inner.len() as u64, "out")
    })
}

/// Resolves a comma-separated list of communities ("64500:666,65000:1")
/// to a JSON array of meaning strings, written to `out`. Free the string
/// with `tw_string_free`.
///
/// # Safety
/// `dict` must be a live handle; `communities` must be a NUL-terminated
/// string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tw_dictionary_annotate(
    dict: *const TwDictionary,
    communities: *const c_char,
    out: *mut *mut c_char,
) -> TwStatus {
    guarded(|| {
        let Some(dict) = dict.as_ref() else {
            return fail(TwStatus::NullArgument, "dict is NULL");
        };
        let text = match str_arg(communities, "communities") {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(TwStatus::NullArgument, "out is NULL");
        }
        let mut parsed = Vec::new();
        for piece in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match piece.parse::<Community>() {
                Ok(c) => parsed.push(c),
                Err(err) => {
                    return fail(TwStatus::ParseError, format!("community {piece}: {err}"))
                }
            }
        }
        let meanings: Vec<String> = dict
            .inner
            .annotate(parsed.iter())
            .into_iter()
            .map(|m| m.to_string())
            .collect();
        let json = serde_json::to_string(&meanings).expect("strings serialize");
        write_out(out, string_to_c(json), "out")
    })
}

/// Releases a dictionary handle. NULL is a no-op. Engines created from
/// the handle keep their own reference and stay valid.
///
/// # Safety
/// `dict` must be NULL or a live handle, which becomes invalid.
#[no_mangle]
pub unsafe extern "C" fn tw_dictionary_free(dict: *mut TwDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

// -------------------------------------------------------------- engine

/// The default engine configuration: 60 s bins, 3600 s learning window,
/// 2 observations, absolute threshold 10, 30 s slack.
#[no_mangle]
pub extern "C" fn tw_engine_config_default() -> TwEngineConfig {
    let cfg = EngineConfig::default();
    TwEngineConfig {
        bin_width: cfg.bin_width,
        init_window: cfg.init_window,
        min_observations: cfg.min_observations,
        threshold: match cfg.threshold {
            Threshold::Absolute(k) => k,
            Threshold::Relative(_) => unreachable!("default is absolute"),
        },
        relative_threshold: 0.0,
        reorder_slack: cfg.reorder_slack,
        detect_path_changes: cfg.detect_path_changes,
    }
}

fn engine_config_from(c: &TwEngineConfig) -> EngineConfig {
    EngineConfig {
        bin_width: c.bin_width,
        init_window: c.init_window,
        min_observations: c.min_observations,
        threshold: if c.relative_threshold > 0.0 {
            Threshold::Relative(c.relative_threshold)
        } else {
            Threshold::Absolute(c.threshold)
        },
        reorder_slack: c.reorder_slack,
        detect_path_changes: c.detect_path_changes,
        snapshot_learned: false,
    }
}

/// Creates an engine that learns its baseline from the stream head and
/// then detects deviations. Release with `tw_engine_free`.
///
/// # Safety
/// `dict` must be a live handle; `cfg` must be NULL (defaults) or valid
/// for one read; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tw_engine_new(
    dict: *const TwDictionary,
    cfg: *const TwEngineConfig,
    out: *mut *mut TwEngine,
) -> TwStatus {
    guarded(|| {
        let Some(dict) = dict.as_ref() else {
            return fail(TwStatus::NullArgument, "dict is NULL");
        };
        if out.is_null() {
            return fail(TwStatus::NullArgument, "out is NULL");
        }
        let config = match cfg.as_ref() {
            Some(c) => engine_config_from(c),
            None => EngineConfig::default(),
        };
        match StreamEngine::new(Arc::clone(&dict.inner), config) {
            Ok(engine) => {
                let handle = Box::new(TwEngine { engine, signals: Vec::new() });
                write_out(out, Box::into_raw(handle), "out")
            }
            Err(err) => fail(TwStatus::InvalidArgument, err.to_string()),
        }
    })
}

/// Feeds one NDJSON record. Lines that fail to parse are counted and
/// dropped, not errors; emitted signals accumulate until drained.
///
/// # Safety
/// `engine` must be a live handle; `line` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn tw_engine_feed(engine: *mut TwEngine, line: *const c_char) -> TwStatus {
    guarded(|| {
        let Some(handle) = engine.as_mut() else {
            return fail(TwStatus::NullArgument, "engine is NULL");
        };
        if line.is_null() {
            return fail(TwStatus::NullArgument, "line is NULL");
        }
        let Ok(text) = CStr::from_ptr(line).to_str() else {
            // Same treatment as undecodable bytes in a stream file.
            handle.engine.note_malformed();
            return TwStatus::Ok;
        };
        match handle.engine.feed_line(text) {
            Ok(outcome) => {
                handle.signals.extend(outcome.signals);
                TwStatus::Ok
            }
            Err(err) => {
                let status = match err {
                    EngineError::Config(_) => TwStatus::InvalidArgument,
                    _ => TwStatus::Internal,
                };
                fail(status, err.to_string())
            }
        }
    })
}

/// Ends the stream: finalizes a still-learning baseline and closes all
/// open bins; remaining signals become drainable.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tw_engine_finish(engine: *mut TwEngine) -> TwStatus {
    guarded(|| {
        let Some(handle) = engine.as_mut() else {
            return fail(TwStatus::NullArgument, "engine is NULL");
        };
        match handle.engine.finish() {
            Ok(outcome) => {
                handle.signals.extend(outcome.signals);
                TwStatus::Ok
            }
            Err(err) => fail(TwStatus::Internal, err.to_string()),
        }
    })
}

/// Takes all buffered signals as NDJSON text (one JSON object per line,
/// empty string when none) and clears the buffer. Free the string with
/// `tw_string_free`.
///
/// # Safety
/// `engine` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tw_engine_drain_signals(
    engine: *mut TwEngine,
    out: *mut *mut c_char,
) -> TwStatus {
    guarded(|| {
        let Some(handle) = engine.as_mut() else {
            return fail(TwStatus::NullArgument, "engine is NULL");
        };
        if out.is_null() {
            return fail(TwStatus::NullArgument, "out is NULL");
        }
        let mut text = String::new();
        for signal in handle.signals.drain(..) {
            text.push_str(&signal.to_json().to_string());
            text.push('\n');
        }
        write_out(out, string_to_c(text), "out")
    })
}

/// Writes a JSON object with the engine's counters: records consumed,
/// accepted, dropped, learned baseline size (null while learning),
/// closed bins, deviating keys, emitted signals, and buffered signals.
/// Free the string with `tw_string_free`.
///
/// # Safety
/// `engine` must be a live handle; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tw_engine_stats_json(
    engine: *const TwEngine,
    out: *mut *mut c_char,
) -> TwStatus {
    guarded(|| {
        let Some(handle) = engine.as_ref() else {
            return fail(TwStatus::NullArgument, "engine is NULL");
        };
        if out.is_null() {
            return fail(TwStatus::NullArgument, "out is NULL");
        }
        let cursor = handle.engine.cursor();
        let detector = handle.engine.detector_stats().unwrap_or_default();
        let stats = serde_json::json!({
            "consumed": cursor.consumed(),
            "accepted": cursor.accepted(),
            "dropped_malformed": cursor.dropped(tagwatch::ingest::DropReason::Malformed),
            "dropped_stale": cursor.dropped(tagwatch::ingest::DropReason::Stale),
            "learned_baseline_size": handle.engine.learned_baseline_size(),
            "bins_closed": detector.bins_closed,
            "deviating_keys": detector.deviating_keys_total,
            "signals_emitted": detector.signals_emitted,
            "signals_buffered": handle.signals.len(),
        });
        write_out(out, string_to_c(stats.to_string()), "out")
    })
}

/// Releases an engine handle. NULL is a no-op.
///
/// # Safety
/// `engine` must be NULL or a live handle, which becomes invalid.
#[no_mangle]
pub unsafe extern "C" fn tw_engine_free(engine: *mut TwEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

// -------------------------------------------------------- valley check

/// Checks a comma-separated relationship word, origin first, against the
/// valley-free rule ("customer,peer,provider"; "unknown" for unlabeled
/// edges, which may take any role). Writes whether every completion
/// violates the rule, plus the witness edge pair (origin-nearest first)
/// or -1/-1 when not violating.
///
/// # Safety
/// `roles` must be a NUL-terminated string; the three out-pointers must
/// each be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tw_check_valley(
    roles: *const c_char,
    out_violating: *mut bool,
    out_witness_near: *mut i64,
    out_witness_far: *mut i64,
) -> TwStatus {
    guarded(|| {
        let text = match str_arg(roles, "roles") {
            Ok(t) => t,
            Err(status) => return status,
        };
        if out_violating.is_null() || out_witness_near.is_null() || out_witness_far.is_null() {
            return fail(TwStatus::NullArgument, "an out-pointer is NULL");
        }
        let mut word: Vec<Option<RelationshipRole>> = Vec::new();
        for piece in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            word.push(match piece {
                "customer" => Some(RelationshipRole::Customer),
                "peer" => Some(RelationshipRole::Peer),
                "provider" => Some(RelationshipRole::Provider),
                "unknown" => None,
                other => {
                    return fail(
                        TwStatus::InvalidArgument,
                        format!("unknown role {other}: expected customer, peer, provider, or unknown"),
                    )
                }
            });
        }
        let check = check_valley_free(&word);
        out_violating.write(check.violating);
        let (near, far) = match check.witness {
            Some((i, j)) => (i as i64, j as i64),
            None => (-1, -1),
        };
        out_witness_near.write(near);
        out_witness_far.write(far);
        TwStatus::Ok
    })
}
