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

//! Update ingestion from NDJSON collector dumps.
//!
//! One JSON object per line:
//!
//! ```json
//! {"ts":1519862460,"peer_asn":64496,"peer_addr":"203.0.113.1","type":"A",
//!  "prefix":"192.0.2.0/24","as_path":[64496,64500,64501],"communities":["64501:100"]}
//! ```
//!
//! `as_path` is required for announcements and forbidden for withdrawals;
//! `communities` is optional and only valid for announcements. Unknown extra
//! fields are ignored. Malformed lines are counted and dropped, never fatal:
//! a monitoring pipeline has to survive dirty feeds.

use std::collections::BTreeSet;
use std::io::{self, BufRead};

use thiserror::Error;

use crate::bgp::{
    AsPath, BgpUpdate, Community, CommunityParseError, PeerId, Prefix, PrefixParseError,
};

/// Tolerated out-of-order arrival, in seconds.
pub const DEFAULT_REORDER_SLACK: i64 = 30;

/// Why a single record was rejected. None of these abort the stream.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("record is not a JSON object")]
    NotAnObject,
    #[error("missing required field {0:?}")]
    MissingField(&'static str),
    #[error("field {field:?} {problem}")]
    InvalidField {
        field: &'static str,
        problem: &'static str,
    },
    #[error("invalid community: {0}")]
    Community(#[from] CommunityParseError),
    #[error("invalid prefix: {0}")]
    Prefix(#[from] PrefixParseError),
    #[error("as_path contains an AS-set; set segments are not supported")]
    AsSetInPath,
    #[error("announcement carries an empty as_path")]
    EmptyPath,
    #[error("withdrawal must not carry as_path or communities")]
    WithdrawalWithAttributes,
}

fn invalid(field: &'static str, problem: &'static str) -> RecordError {
    RecordError::InvalidField { field, problem }
}

/// Parses one NDJSON line into an update. Total over arbitrary input:
/// any byte sequence yields a value or an error, never a panic.
pub fn parse_record(line: &str) -> Result<BgpUpdate, RecordError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| RecordError::Json(e.to_string()))?;
    let obj = value.as_object().ok_or(RecordError::NotAnObject)?;

    // Fields set to JSON null count as absent.
    let field = |name: &'static str| -> Option<&serde_json::Value> {
        obj.get(name).filter(|v| !v.is_null())
    };
    let require = |name: &'static str| -> Result<&serde_json::Value, RecordError> {
        field(name).ok_or(RecordError::MissingField(name))
    };

    let ts = require("ts")?
        .as_i64()
        .ok_or_else(|| invalid("ts", "must be an integer"))?;
    let peer_asn = require("peer_asn")?
        .as_u64()
        .filter(|v| *v <= u64::from(u32::MAX))
        .ok_or_else(|| invalid("peer_asn", "must be an integer in 0..=4294967295"))?
        as u32;
    let peer_addr = require("peer_addr")?
        .as_str()
        .ok_or_else(|| invalid("peer_addr", "must be a string"))?
        .to_string();
    let kind = require("type")?
        .as_str()
        .ok_or_else(|| invalid("type", "must be a string"))?;
    let prefix: Prefix = require("prefix")?
        .as_str()
        .ok_or_else(|| invalid("prefix", "must be a string"))?
        .parse()?;
    let peer = PeerId::new(peer_asn, peer_addr);

    match kind {
        "A" => {
            let raw_path = require("as_path")?
                .as_array()
                .ok_or_else(|| invalid("as_path", "must be an array of integers"))?;
            let mut hops = Vec::with_capacity(raw_path.len());
            for elem in raw_path {
                if elem.is_array() || elem.is_string() {
                    // Set segments show up as nested arrays or brace strings.
                    return Err(RecordError::AsSetInPath);
                }
                let hop = elem
                    .as_u64()
                    .filter(|v| *v <= u64::from(u32::MAX))
                    .ok_or_else(|| invalid("as_path", "elements must be integers in 0..=4294967295"))?;
                hops.push(hop as u32);
            }
            let mut communities = BTreeSet::new();
            if let Some(raw) = field("communities") {
                let arr = raw
                    .as_array()
                    .ok_or_else(|| invalid("communities", "must be an array of strings"))?;
                for elem in arr {
                    let text = elem
                        .as_str()
                        .ok_or_else(|| invalid("communities", "elements must be strings"))?;
                    communities.insert(text.parse::<Community>()?);
                }
            }
            BgpUpdate::announcement(ts, peer, prefix, AsPath::new(hops), communities)
                .map_err(|_| RecordError::EmptyPath)
        }
        "W" => {
            if field("as_path").is_some() {
                return Err(RecordError::WithdrawalWithAttributes);
            }
            if let Some(raw) = field("communities") {
                // An explicit empty list is tolerated; actual tags are not.
                match raw.as_array() {
                    Some(arr) if arr.is_empty() => {}
                    _ => return Err(RecordError::WithdrawalWithAttributes),
                }
            }
            Ok(BgpUpdate::withdrawal(ts, peer, prefix))
        }
        _ => Err(invalid("type", "must be \"A\" or \"W\"")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropReason {
    Malformed,
    Stale,
}

/// Admission bookkeeping over a (mostly) time-ordered update feed.
///
/// A record is accepted when its timestamp is no older than the newest
/// accepted timestamp minus the reorder slack; staler records are dropped.
/// Always: consumed == accepted + dropped.
#[derive(Debug, Clone)]
pub struct StreamCursor {
    slack: i64,
    consumed: u64,
    accepted: u64,
    last_accepted_ts: Option<i64>,
    dropped_malformed: u64,
    dropped_stale: u64,
}

impl StreamCursor {
    pub fn new(slack: i64) -> Self {
        StreamCursor {
            slack: slack.max(0),
            consumed: 0,
            accepted: 0,
            last_accepted_ts: None,
            dropped_malformed: 0,
            dropped_stale: 0,
        }
    }

    /// Offers one line to the cursor. Blank lines are skipped without
    /// counting; anything else is consumed and either accepted (returned)
    /// or dropped with its reason recorded.
    pub fn offer_line(&mut self, line: &str) -> Option<BgpUpdate> {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return None;
        }
        self.consumed += 1;
        let update = match parse_record(trimmed) {
            Ok(u) => u,
            Err(_) => {
                self.dropped_malformed += 1;
                return None;
            }
        };
        if let Some(last) = self.last_accepted_ts {
            if update.timestamp < last - self.slack {
                self.dropped_stale += 1;
                return None;
            }
        }
        self.accepted += 1;
        self.last_accepted_ts = Some(
            self.last_accepted_ts
                .map_or(update.timestamp, |last| last.max(update.timestamp)),
        );
        Some(update)
    }

    /// Counts a record that could not even be decoded as text.
    pub fn note_malformed(&mut self) {
        self.consumed += 1;
        self.dropped_malformed += 1;
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn dropped(&self, reason: DropReason) -> u64 {
        match reason {
            DropReason::Malformed => self.dropped_malformed,
            DropReason::Stale => self.dropped_stale,
        }
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped_malformed + self.dropped_stale
    }

    /// Newest accepted timestamp; non-decreasing across accepted records.
    pub fn last_accepted_ts(&self) -> Option<i64> {
        self.last_accepted_ts
    }
}

/// Pull-based update reader over any buffered byte source.
pub struct UpdateStream<R> {
    reader: R,
    cursor: StreamCursor,
    buf: Vec<u8>,
}

impl<R: BufRead> UpdateStream<R> {
    pub fn new(reader: R, slack: i64) -> Self {
        UpdateStream {
            reader,
            cursor: StreamCursor::new(slack),
            buf: Vec::new(),
        }
    }

    /// Next accepted update, or None at end of stream. Only a failing
    /// source read is an error; bad records are counted and skipped.
    pub fn next_update(&mut self) -> io::Result<Option<BgpUpdate>> {
        loop {
            self.buf.clear();
            let n = self.reader.read_until(b'\n', &mut self.buf)?;
            if n == 0 {
                return Ok(None);
            }
            match std::str::from_utf8(&self.buf) {
                Ok(text) => {
                    if let Some(update) = self.cursor.offer_line(text) {
                        return Ok(Some(update));
                    }
                }
                Err(_) => self.cursor.note_malformed(),
            }
        }
    }

    pub fn cursor(&self) -> &StreamCursor {
        &self.cursor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgp::UpdateKind;
    use proptest::prelude::*;

    const ANNOUNCEMENT: &str = r#"{"ts":1519862460,"peer_asn":64496,"peer_addr":"203.0.113.1","type":"A","prefix":"192.0.2.0/24","as_path":[64496,64500,64501],"communities":["64501:100"]}"#;

    #[test]
    fn parses_announcement_record() {
        let u = parse_record(ANNOUNCEMENT).unwrap();
        assert_eq!(u.timestamp, 1519862460);
        assert_eq!(u.peer, PeerId::new(64496, "203.0.113.1"));
        assert_eq!(u.kind, UpdateKind::Announcement);
        assert_eq!(u.prefix.to_string(), "192.0.2.0/24");
        assert_eq!(u.path.as_ref().unwrap().hops(), &[64496, 64500, 64501]);
        assert_eq!(
            u.communities,
            BTreeSet::from([Community::new(64501, 100)])
        );
    }

    #[test]
    fn parses_withdrawal_record() {
        let u = parse_record(
            r#"{"ts":10,"peer_asn":64496,"peer_addr":"203.0.113.1","type":"W","prefix":"192.0.2.0/24"}"#,
        )
        .unwrap();
        assert_eq!(u.kind, UpdateKind::Withdrawal);
        assert!(u.path.is_none());
        assert!(u.communities.is_empty());
    }

    #[test]
    fn ignores_unknown_fields() {
        let line = r#"{"ts":10,"peer_asn":1,"peer_addr":"p","type":"W","prefix":"10.0.0.0/8","collector":"rrc00","flags":7}"#;
        assert!(parse_record(line).is_ok());
    }

    #[test]
    fn missing_fields_are_reported_by_name() {
        let line = r#"{"ts":10,"peer_asn":1,"peer_addr":"p","type":"A","as_path":[1]}"#;
        assert_eq!(parse_record(line), Err(RecordError::MissingField("prefix")));
        let line = r#"{"peer_asn":1,"peer_addr":"p","type":"W","prefix":"10.0.0.0/8"}"#;
        assert_eq!(parse_record(line), Err(RecordError::MissingField("ts")));
        let line = r#"{"ts":10,"peer_asn":1,"peer_addr":"p","type":"A","prefix":"10.0.0.0/8"}"#;
        assert_eq!(parse_record(line), Err(RecordError::MissingField("as_path")));
    }

    #[test]
    fn malformed_json_and_non_objects_are_distinct() {
        assert!(matches!(parse_record("{nope"), Err(RecordError::Json(_))));
        assert!(matches!(parse_record("[1,2]"), Err(RecordError::NotAnObject)));
        assert!(matches!(parse_record("42"), Err(RecordError::NotAnObject)));
    }

    #[test]
    fn fractional_timestamp_is_invalid() {
        let line = r#"{"ts":15.5,"peer_asn":1,"peer_addr":"p","type":"W","prefix":"10.0.0.0/8"}"#;
        assert!(matches!(
            parse_record(line),
            Err(RecordError::InvalidField { field: "ts", .. })
        ));
    }

    #[test]
    fn as_set_markers_are_rejected() {
        let braces = r#"{"ts":1,"peer_asn":1,"peer_addr":"p","type":"A","prefix":"10.0.0.0/8","as_path":[64496,"{64500,64501}"]}"#;
        assert_eq!(parse_record(braces), Err(RecordError::AsSetInPath));
        let nested = r#"{"ts":1,"peer_asn":1,"peer_addr":"p","type":"A","prefix":"10.0.0.0/8","as_path":[64496,[64500,64501]]}"#;
        assert_eq!(parse_record(nested), Err(RecordError::AsSetInPath));
    }

    #[test]
    fn withdrawal_with_attributes_is_rejected() {
        let with_path = r#"{"ts":1,"peer_asn":1,"peer_addr":"p","type":"W","prefix":"10.0.0.0/8","as_path":[1]}"#;
        assert_eq!(parse_record(with_path), Err(RecordError::WithdrawalWithAttributes));
        let with_comms = r#"{"ts":1,"peer_asn":1,"peer_addr":"p","type":"W","prefix":"10.0.0.0/8","communities":["1:2"]}"#;
        assert_eq!(parse_record(with_comms), Err(RecordError::WithdrawalWithAttributes));
        let empty_comms = r#"{"ts":1,"peer_asn":1,"peer_addr":"p","type":"W","prefix":"10.0.0.0/8","communities":[]}"#;
        assert!(parse_record(empty_comms).is_ok());
    }

    #[test]
    fn community_errors_pass_through_with_form_detail() {
        let line = r#"{"ts":1,"peer_asn":1,"peer_addr":"p","type":"A","prefix":"10.0.0.0/8","as_path":[1],"communities":["64500:0:1"]}"#;
        assert!(matches!(
            parse_record(line),
            Err(RecordError::Community(CommunityParseError::UnsupportedForm(_)))
        ));
    }

    #[test]
    fn empty_path_announcement_is_rejected() {
        let line = r#"{"ts":1,"peer_asn":1,"peer_addr":"p","type":"A","prefix":"10.0.0.0/8","as_path":[]}"#;
        assert_eq!(parse_record(line), Err(RecordError::EmptyPath));
    }

    fn wline(ts: i64) -> String {
        format!(r#"{{"ts":{ts},"peer_asn":1,"peer_addr":"p","type":"W","prefix":"10.0.0.0/8"}}"#)
    }

    #[test]
    fn cursor_applies_reorder_slack() {
        let mut cursor = StreamCursor::new(30);
        assert!(cursor.offer_line(&wline(100)).is_some());
        // Within slack: 80 >= 100 - 30.
        assert!(cursor.offer_line(&wline(80)).is_some());
        // The high-water mark stays at 100, so 60 is stale.
        assert!(cursor.offer_line(&wline(60)).is_none());
        assert_eq!(cursor.dropped(DropReason::Stale), 1);
        assert_eq!(cursor.last_accepted_ts(), Some(100));
        // Equal timestamps are accepted.
        assert!(cursor.offer_line(&wline(100)).is_some());
        assert_eq!(cursor.consumed(), 4);
        assert_eq!(cursor.accepted(), 3);
    }

    #[test]
    fn cursor_counts_malformed_without_aborting() {
        let mut cursor = StreamCursor::new(30);
        assert!(cursor.offer_line("not json").is_none());
        assert!(cursor.offer_line(&wline(5)).is_some());
        assert!(cursor.offer_line("").is_none()); // blank: skipped, not counted
        assert_eq!(cursor.consumed(), 2);
        assert_eq!(cursor.dropped(DropReason::Malformed), 1);
        assert_eq!(cursor.accepted(), 1);
    }

    #[test]
    fn stream_skips_garbage_and_reports_counts() {
        let data = format!(
            "{}\nnot json at all\n{}\n\n{}\n",
            wline(10),
            wline(20),
            wline(12) // stale only if < 20 - slack; with slack 5, 12 < 15
        );
        let mut stream = UpdateStream::new(data.as_bytes(), 5);
        let mut seen = Vec::new();
        while let Some(u) = stream.next_update().unwrap() {
            seen.push(u.timestamp);
        }
        assert_eq!(seen, vec![10, 20]);
        let cursor = stream.cursor();
        assert_eq!(cursor.consumed(), 4);
        assert_eq!(cursor.accepted(), 2);
        assert_eq!(cursor.dropped(DropReason::Malformed), 1);
        assert_eq!(cursor.dropped(DropReason::Stale), 1);
    }

    #[test]
    fn stream_counts_invalid_utf8_as_malformed() {
        let mut data = Vec::new();
        data.extend_from_slice(wline(10).as_bytes());
        data.push(b'\n');
        data.extend_from_slice(&[0xff, 0xfe, 0x80, b'\n']);
        data.extend_from_slice(wline(11).as_bytes());
        data.push(b'\n');
        let mut stream = UpdateStream::new(&data[..], 30);
        let mut count = 0;
        while stream.next_update().unwrap().is_some() {
            count += 1;
        }
        assert_eq!(count, 2);
        assert_eq!(stream.cursor().dropped(DropReason::Malformed), 1);
        assert_eq!(stream.cursor().consumed(), 3);
    }

    proptest! {
        // Total over arbitrary input: errors, never panics.
        #[test]
        fn parse_record_never_panics(line in "\\PC*") {
            let _ = parse_record(&line);
        }

        #[test]
        fn parse_record_never_panics_on_json_shapes(line in "[{}\\[\\]:,\"0-9a-zA-Z \\.]*") {
            let _ = parse_record(&line);
        }

        #[test]
        fn cursor_conserves_record_counts(lines in proptest::collection::vec("[ -~]{0,40}", 0..40)) {
            let mut cursor = StreamCursor::new(30);
            for line in &lines {
                let _ = cursor.offer_line(line);
            }
            prop_assert_eq!(cursor.consumed(), cursor.accepted() + cursor.dropped_total());
        }
    }
}
