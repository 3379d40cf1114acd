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

//! Blackhole request classification.
//!
//! Every announcement is screened, whether or not its route key is in the
//! baseline: blackhole requests typically arrive as fresh, more-specific
//! prefixes that were never part of steady state. An announcement whose
//! communities resolve to a blackhole meaning becomes an event, attributed
//! to the ASN of the first such community in (asn, value) order.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use thiserror::Error;

use crate::baseline::Baseline;
use crate::bgp::{BgpUpdate, Community, PeerId, Prefix, UpdateKind};
use crate::dictionary::{Dictionary, Meaning};

/// One announcement asking for traffic to be dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlackholeEvent {
    pub timestamp: i64,
    pub peer: PeerId,
    pub prefix: Prefix,
    /// ASN half of the first blackhole-resolving community.
    pub requester_asn: u16,
    /// True when the same peer carries a baseline route covering this
    /// prefix; a covered request targets address space in steady use.
    pub covered_by_baseline: bool,
    pub communities: BTreeSet<Community>,
}

impl BlackholeEvent {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "ts": self.timestamp,
            "peer_asn": self.peer.asn,
            "peer_addr": self.peer.addr,
            "prefix": self.prefix.to_string(),
            "requester_asn": self.requester_asn,
            "covered_by_baseline": self.covered_by_baseline,
            "communities": self.communities.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        })
    }
}

/// Classifies one update. Withdrawals and untagged announcements yield
/// None. Pass the baseline when known so coverage can be established;
/// None marks the event as uncovered.
pub fn classify_blackhole(
    update: &BgpUpdate,
    dictionary: &Dictionary,
    baseline: Option<&Baseline>,
) -> Option<BlackholeEvent> {
    if update.kind != UpdateKind::Announcement {
        return None;
    }
    // BTreeSet iterates in (asn, value) order, so the first hit is the
    // canonical requester.
    let requester = update
        .communities
        .iter()
        .find(|c| dictionary.lookup(**c).contains(&Meaning::Blackhole))?;
    let covered_by_baseline = baseline.is_some_and(|b| {
        b.peer_entries(&update.peer)
            .any(|(key, _)| key.prefix.covers(&update.prefix))
    });
    Some(BlackholeEvent {
        timestamp: update.timestamp,
        peer: update.peer.clone(),
        prefix: update.prefix.clone(),
        requester_asn: requester.asn,
        covered_by_baseline,
        communities: update.communities.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("aggregation period must be positive, got {0}")]
pub struct InvalidPeriod(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlackholeSeriesRow {
    pub period_start: i64,
    /// Prefixes first seen or repeated within this period, deduplicated.
    pub distinct_prefixes: u64,
    pub events: u64,
    /// Distinct prefixes across all periods up to and including this one.
    pub cumulative_distinct: u64,
}

/// Aggregates events into dense fixed-width periods (e.g. 86400 for
/// daily rows). Periods with no events still appear, zeroed.
pub fn blackhole_series(
    events: &[BlackholeEvent],
    period: i64,
) -> Result<Vec<BlackholeSeriesRow>, InvalidPeriod> {
    if period <= 0 {
        return Err(InvalidPeriod(period));
    }
    if events.is_empty() {
        return Ok(Vec::new());
    }
    let mut per_period: BTreeMap<i64, (BTreeSet<&Prefix>, u64)> = BTreeMap::new();
    for event in events {
        let idx = event.timestamp.div_euclid(period);
        let slot = per_period.entry(idx).or_default();
        slot.0.insert(&event.prefix);
        slot.1 += 1;
    }
    let (&first, _) = per_period.first_key_value().expect("non-empty");
    let (&last, _) = per_period.last_key_value().expect("non-empty");
    let mut seen: BTreeSet<&Prefix> = BTreeSet::new();
    let mut rows = Vec::with_capacity((last - first + 1) as usize);
    for idx in first..=last {
        let (distinct, events) = match per_period.get(&idx) {
            Some((prefixes, count)) => {
                seen.extend(prefixes.iter().copied());
                (prefixes.len() as u64, *count)
            }
            None => (0, 0),
        };
        rows.push(BlackholeSeriesRow {
            period_start: idx * period,
            distinct_prefixes: distinct,
            events,
            cumulative_distinct: seen.len() as u64,
        });
    }
    Ok(rows)
}

/// Distinct blackholed prefixes bucketed by prefix length.
pub fn prefix_length_histogram(events: &[BlackholeEvent]) -> BTreeMap<u8, u64> {
    let distinct: BTreeSet<&Prefix> = events.iter().map(|e| &e.prefix).collect();
    let mut histogram = BTreeMap::new();
    for prefix in distinct {
        *histogram.entry(prefix.length()).or_insert(0) += 1;
    }
    histogram
}

/// CSV: period_start,distinct_prefixes,events,cumulative_distinct.
pub fn write_blackhole_series_csv<W: Write>(
    rows: &[BlackholeSeriesRow],
    out: W,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["period_start", "distinct_prefixes", "events", "cumulative_distinct"])
        .map_err(io::Error::other)?;
    for row in rows {
        w.write_record([
            row.period_start.to_string(),
            row.distinct_prefixes.to_string(),
            row.events.to_string(),
            row.cumulative_distinct.to_string(),
        ])
        .map_err(io::Error::other)?;
    }
    w.flush()
}

/// CSV: prefix_length,count.
pub fn write_histogram_csv<W: Write>(histogram: &BTreeMap<u8, u64>, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["prefix_length", "count"]).map_err(io::Error::other)?;
    for (length, count) in histogram {
        w.write_record([length.to_string(), count.to_string()])
            .map_err(io::Error::other)?;
    }
    w.flush()
}
