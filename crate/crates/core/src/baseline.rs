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

//! Baseline learning over an initialization window.
//!
//! The builder watches every update inside the window and keeps, per route
//! key, the announced community set, the latest path, and an observation
//! count. A route graduates into the baseline only if its community set
//! never changed, it was seen often enough, and it was not left withdrawn
//! at the end of the window.
//!
//! Withdrawn-ness is resolved by timestamp, not arrival order: a route is
//! withdrawn iff its newest withdrawal is strictly newer than its newest
//! announcement. Equal timestamps therefore resolve in favor of the
//! announcement no matter which record arrived first.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::bgp::{AsPath, BgpUpdate, Community, Prefix, PeerId, RouteKey, UpdateKind};

pub const DEFAULT_INIT_WINDOW: i64 = 3600;
pub const DEFAULT_MIN_OBSERVATIONS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("initialization window must be positive, got {0}")]
    InvalidWindow(i64),
    #[error("min_observations must be at least 1")]
    InvalidMinObservations,
    #[error("timestamp {timestamp} outside initialization window [{start}, {end})")]
    OutsideWindow {
        timestamp: i64,
        start: i64,
        end: i64,
    },
}

/// A stable route as learned during initialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineEntry {
    pub communities: std::collections::BTreeSet<Community>,
    pub path: AsPath,
    pub observations: u64,
}

#[derive(Debug, Clone, Default)]
struct Track {
    communities: Option<std::collections::BTreeSet<Community>>,
    path: Option<AsPath>,
    observations: u64,
    last_announce_ts: Option<i64>,
    last_withdraw_ts: Option<i64>,
    unstable: bool,
}

impl Track {
    fn withdrawn(&self) -> bool {
        match (self.last_withdraw_ts, self.last_announce_ts) {
            (Some(w), Some(a)) => w > a,
            (Some(_), None) => true,
            (None, _) => false,
        }
    }
}

/// Accumulates updates over the initialization window.
#[derive(Debug, Clone)]
pub struct BaselineBuilder {
    window_start: i64,
    window: i64,
    min_observations: u64,
    tracks: BTreeMap<RouteKey, Track>,
}

impl BaselineBuilder {
    pub fn new(window_start: i64, window: i64, min_observations: u64) -> Result<Self, BaselineError> {
        if window <= 0 {
            return Err(BaselineError::InvalidWindow(window));
        }
        if min_observations == 0 {
            return Err(BaselineError::InvalidMinObservations);
        }
        Ok(BaselineBuilder {
            window_start,
            window,
            min_observations,
            tracks: BTreeMap::new(),
        })
    }

    pub fn window_start(&self) -> i64 {
        self.window_start
    }

    /// First timestamp past the window.
    pub fn window_end(&self) -> i64 {
        self.window_start + self.window
    }

    pub fn observe(&mut self, update: &BgpUpdate) -> Result<(), BaselineError> {
        if update.timestamp < self.window_start || update.timestamp >= self.window_end() {
            return Err(BaselineError::OutsideWindow {
                timestamp: update.timestamp,
                start: self.window_start,
                end: self.window_end(),
            });
        }
        let track = self.tracks.entry(update.key()).or_default();
        match update.kind {
            UpdateKind::Announcement => {
                track.observations += 1;
                match &track.communities {
                    None => track.communities = Some(update.communities.clone()),
                    Some(seen) if *seen != update.communities => track.unstable = true,
                    Some(_) => {}
                }
                // Paths may churn without destabilizing; keep the newest.
                if track.last_announce_ts.map_or(true, |t| update.timestamp >= t) {
                    track.path = update.path.clone();
                }
                track.last_announce_ts = Some(
                    track
                        .last_announce_ts
                        .map_or(update.timestamp, |t| t.max(update.timestamp)),
                );
            }
            UpdateKind::Withdrawal => {
                track.last_withdraw_ts = Some(
                    track
                        .last_withdraw_ts
                        .map_or(update.timestamp, |t| t.max(update.timestamp)),
                );
            }
        }
        Ok(())
    }

    /// Number of route keys currently tracked (stable or not).
    pub fn tracked(&self) -> usize {
        self.tracks.len()
    }

    pub fn finalize(self) -> Baseline {
        let min = self.min_observations;
        let entries = self
            .tracks
            .into_iter()
            .filter_map(|(key, track)| {
                if track.unstable || track.withdrawn() || track.observations < min {
                    return None;
                }
                let communities = track.communities?;
                let path = track.path?;
                Some((
                    key,
                    BaselineEntry {
                        communities,
                        path,
                        observations: track.observations,
                    },
                ))
            })
            .collect();
        Baseline { entries }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineImportError {
    #[error("read failed: {0}")]
    Io(String),
    #[error("line {line}: malformed JSON: {problem}")]
    Json { line: u64, problem: String },
    #[error("line {line}: {problem}")]
    Invalid { line: u64, problem: String },
    #[error("line {line}: duplicate route key {key}")]
    DuplicateKey { line: u64, key: String },
}

/// The learned stable-route table keyed by (peer, prefix).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Baseline {
    entries: BTreeMap<RouteKey, BaselineEntry>,
}

impl Baseline {
    pub fn empty() -> Self {
        Baseline::default()
    }

    pub fn from_entries(entries: BTreeMap<RouteKey, BaselineEntry>) -> Self {
        Baseline { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &RouteKey) -> Option<&BaselineEntry> {
        self.entries.get(key)
    }

    pub fn contains_key(&self, key: &RouteKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&RouteKey, &BaselineEntry)> {
        self.entries.iter()
    }

    /// Route keys for one peer, in prefix order.
    pub fn peer_entries<'a>(
        &'a self,
        peer: &'a PeerId,
    ) -> impl Iterator<Item = (&'a RouteKey, &'a BaselineEntry)> + 'a {
        self.entries
            .iter()
            .filter(move |(key, _)| &key.peer == peer)
    }

    pub(crate) fn remove(&mut self, key: &RouteKey) -> Option<BaselineEntry> {
        self.entries.remove(key)
    }

    pub(crate) fn set_communities(
        &mut self,
        key: &RouteKey,
        communities: std::collections::BTreeSet<Community>,
    ) {
        if let Some(entry) = self.entries.get_mut(key) {
            entry.communities = communities;
        }
    }

    pub(crate) fn set_path(&mut self, key: &RouteKey, path: AsPath) {
        if let Some(entry) = self.entries.get_mut(key) {
            entry.path = path;
        }
    }

    /// Writes one JSON object per route in key order. Stable byte-for-byte
    /// for equal baselines.
    pub fn export<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (key, entry) in &self.entries {
            let line = serde_json::json!({
                "peer_asn": key.peer.asn,
                "peer_addr": key.peer.addr,
                "prefix": key.prefix.to_string(),
                "communities": entry.communities.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                "path": entry.path.hops(),
                "observations": entry.observations,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn import<R: BufRead>(reader: R) -> Result<Baseline, BaselineImportError> {
        let mut entries: BTreeMap<RouteKey, BaselineEntry> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let text = line.map_err(|e| BaselineImportError::Io(e.to_string()))?;
            if text.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
                BaselineImportError::Json {
                    line: line_no,
                    problem: e.to_string(),
                }
            })?;
            let (key, entry) = parse_entry(&value)
                .map_err(|problem| BaselineImportError::Invalid { line: line_no, problem })?;
            if entries.contains_key(&key) {
                return Err(BaselineImportError::DuplicateKey {
                    line: line_no,
                    key: format!("{}|{}", key.peer, key.prefix),
                });
            }
            entries.insert(key, entry);
        }
        Ok(Baseline { entries })
    }
}

fn parse_entry(value: &serde_json::Value) -> Result<(RouteKey, BaselineEntry), String> {
    let obj = value.as_object().ok_or("not a JSON object")?;
    let get = |name: &str| obj.get(name).ok_or_else(|| format!("missing field {name:?}"));
    let peer_asn = get("peer_asn")?
        .as_u64()
        .filter(|v| *v <= u64::from(u32::MAX))
        .ok_or("peer_asn must be an integer in 0..=4294967295")? as u32;
    let peer_addr = get("peer_addr")?
        .as_str()
        .ok_or("peer_addr must be a string")?
        .to_string();
    let prefix: Prefix = get("prefix")?
        .as_str()
        .ok_or("prefix must be a string")?
        .parse()
        .map_err(|e| format!("bad prefix: {e}"))?;
    let mut communities = std::collections::BTreeSet::new();
    for elem in get("communities")?
        .as_array()
        .ok_or("communities must be an array")?
    {
        let text = elem.as_str().ok_or("communities elements must be strings")?;
        communities.insert(
            text.parse::<Community>()
                .map_err(|e| format!("bad community: {e}"))?,
        );
    }
    let mut hops = Vec::new();
    for elem in get("path")?.as_array().ok_or("path must be an array")? {
        hops.push(
            elem.as_u64()
                .filter(|v| *v <= u64::from(u32::MAX))
                .ok_or("path elements must be integers in 0..=4294967295")? as u32,
        );
    }
    if hops.is_empty() {
        return Err("path must be non-empty".to_string());
    }
    let observations = get("observations")?
        .as_u64()
        .ok_or("observations must be a non-negative integer")?;
    Ok((
        RouteKey::new(PeerId::new(peer_asn, peer_addr), prefix),
        BaselineEntry {
            communities,
            path: AsPath::new(hops),
            observations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn peer() -> PeerId {
        PeerId::new(64496, "203.0.113.1")
    }

    fn pfx(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    fn comms(texts: &[&str]) -> BTreeSet<Community> {
        texts.iter().map(|t| t.parse().unwrap()).collect()
    }

    fn announce(ts: i64, prefix: &str, path: &[u32], tags: &[&str]) -> BgpUpdate {
        BgpUpdate::announcement(ts, peer(), pfx(prefix), AsPath::new(path.to_vec()), comms(tags))
            .unwrap()
    }

    fn withdraw(ts: i64, prefix: &str) -> BgpUpdate {
        BgpUpdate::withdrawal(ts, peer(), pfx(prefix))
    }

    #[test]
    fn stable_route_graduates() {
        let mut b = BaselineBuilder::new(0, 3600, 2).unwrap();
        b.observe(&announce(10, "192.0.2.0/24", &[64496, 64500], &["64500:100"])).unwrap();
        b.observe(&announce(200, "192.0.2.0/24", &[64496, 64500], &["64500:100"])).unwrap();
        let baseline = b.finalize();
        assert_eq!(baseline.len(), 1);
        let entry = baseline
            .get(&RouteKey::new(peer(), pfx("192.0.2.0/24")))
            .unwrap();
        assert_eq!(entry.observations, 2);
        assert_eq!(entry.communities, comms(&["64500:100"]));
    }

    #[test]
    fn differing_community_sets_disqualify_permanently() {
        let mut b = BaselineBuilder::new(0, 3600, 2).unwrap();
        b.observe(&announce(10, "192.0.2.0/24", &[1], &["64500:100"])).unwrap();
        b.observe(&announce(20, "192.0.2.0/24", &[1], &["64500:200"])).unwrap();
        // Back to the original set; still disqualified.
        b.observe(&announce(30, "192.0.2.0/24", &[1], &["64500:100"])).unwrap();
        b.observe(&announce(40, "192.0.2.0/24", &[1], &["64500:100"])).unwrap();
        assert!(b.finalize().is_empty());
    }

    #[test]
    fn path_changes_do_not_destabilize() {
        let mut b = BaselineBuilder::new(0, 3600, 2).unwrap();
        b.observe(&announce(10, "192.0.2.0/24", &[1, 2, 3], &["64500:100"])).unwrap();
        b.observe(&announce(20, "192.0.2.0/24", &[1, 9, 3], &["64500:100"])).unwrap();
        let baseline = b.finalize();
        let entry = baseline
            .get(&RouteKey::new(peer(), pfx("192.0.2.0/24")))
            .unwrap();
        assert_eq!(entry.path.hops(), &[1, 9, 3]);
    }

    #[test]
    fn withdrawn_routes_are_excluded() {
        let mut b = BaselineBuilder::new(0, 3600, 2).unwrap();
        b.observe(&announce(10, "192.0.2.0/24", &[1], &[])).unwrap();
        b.observe(&announce(20, "192.0.2.0/24", &[1], &[])).unwrap();
        b.observe(&withdraw(30, "192.0.2.0/24")).unwrap();
        assert!(b.finalize().is_empty());
    }

    #[test]
    fn reannouncement_clears_withdrawal() {
        let mut b = BaselineBuilder::new(0, 3600, 2).unwrap();
        b.observe(&announce(10, "192.0.2.0/24", &[1], &[])).unwrap();
        b.observe(&withdraw(20, "192.0.2.0/24")).unwrap();
        b.observe(&announce(30, "192.0.2.0/24", &[1], &[])).unwrap();
        assert_eq!(b.finalize().len(), 1);
    }

    #[test]
    fn same_timestamp_tie_resolves_for_announcement_in_either_order() {
        for announce_first in [true, false] {
            let mut b = BaselineBuilder::new(0, 3600, 2).unwrap();
            b.observe(&announce(10, "192.0.2.0/24", &[1], &[])).unwrap();
            let a = announce(50, "192.0.2.0/24", &[1], &[]);
            let w = withdraw(50, "192.0.2.0/24");
            if announce_first {
                b.observe(&a).unwrap();
                b.observe(&w).unwrap();
            } else {
                b.observe(&w).unwrap();
                b.observe(&a).unwrap();
            }
            assert_eq!(b.finalize().len(), 1, "announce_first={announce_first}");
        }
    }

    #[test]
    fn too_few_observations_excluded() {
        let mut b = BaselineBuilder::new(0, 3600, 2).unwrap();
        b.observe(&announce(10, "192.0.2.0/24", &[1], &[])).unwrap();
        assert!(b.finalize().is_empty());
    }

    #[test]
    fn updates_outside_window_are_errors() {
        let mut b = BaselineBuilder::new(100, 3600, 2).unwrap();
        assert_eq!(
            b.observe(&announce(99, "192.0.2.0/24", &[1], &[])),
            Err(BaselineError::OutsideWindow { timestamp: 99, start: 100, end: 3700 })
        );
        assert_eq!(
            b.observe(&announce(3700, "192.0.2.0/24", &[1], &[])),
            Err(BaselineError::OutsideWindow { timestamp: 3700, start: 100, end: 3700 })
        );
        assert!(b.observe(&announce(3699, "192.0.2.0/24", &[1], &[])).is_ok());
    }

    #[test]
    fn invalid_builder_parameters_are_rejected() {
        assert_eq!(
            BaselineBuilder::new(0, 0, 2).unwrap_err(),
            BaselineError::InvalidWindow(0)
        );
        assert_eq!(
            BaselineBuilder::new(0, 3600, 0).unwrap_err(),
            BaselineError::InvalidMinObservations
        );
    }

    #[test]
    fn export_import_round_trips_byte_identically() {
        let mut b = BaselineBuilder::new(0, 3600, 2).unwrap();
        for i in 0..5u32 {
            let prefix = format!("10.0.{i}.0/24");
            b.observe(&announce(10 + i64::from(i), &prefix, &[64496, 64500 + i], &["64500:100"])).unwrap();
            b.observe(&announce(60 + i64::from(i), &prefix, &[64496, 64500 + i], &["64500:100"])).unwrap();
        }
        let baseline = b.finalize();
        let mut first = Vec::new();
        baseline.export(&mut first).unwrap();
        let imported = Baseline::import(&first[..]).unwrap();
        assert_eq!(imported, baseline);
        let mut second = Vec::new();
        imported.export(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn import_rejects_duplicate_keys_with_line_number() {
        let mut b = BaselineBuilder::new(0, 3600, 1).unwrap();
        b.observe(&announce(10, "10.0.0.0/24", &[1], &[])).unwrap();
        let mut out = Vec::new();
        b.finalize().export(&mut out).unwrap();
        let doubled = [out.clone(), out].concat();
        assert!(matches!(
            Baseline::import(&doubled[..]),
            Err(BaselineImportError::DuplicateKey { line: 2, .. })
        ));
    }

    #[test]
    fn import_reports_bad_lines() {
        assert!(matches!(
            Baseline::import(&b"{broken"[..]),
            Err(BaselineImportError::Json { line: 1, .. })
        ));
        assert!(matches!(
            Baseline::import(&br#"{"peer_asn":1}"#[..]),
            Err(BaselineImportError::Invalid { line: 1, .. })
        ));
    }

    // Event script for one key: (ts, is_announce). Paths and communities are
    // derived from ts so equal-ts duplicates are identical records.
    fn run_script(events: &[(i64, bool)]) -> Baseline {
        let mut b = BaselineBuilder::new(0, 3600, 1).unwrap();
        for &(ts, is_announce) in events {
            let u = if is_announce {
                announce(ts, "10.0.0.0/24", &[64496, 64500], &["64500:1"])
            } else {
                withdraw(ts, "10.0.0.0/24")
            };
            b.observe(&u).unwrap();
        }
        b.finalize()
    }

    proptest! {
        // Finalization depends only on the event set, not arrival order.
        #[test]
        fn finalize_is_permutation_insensitive(
            mut events in proptest::collection::vec((0i64..3600, any::<bool>()), 1..12),
            seed in any::<u64>(),
        ) {
            let forward = run_script(&events);
            use rand::{SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            events.shuffle(&mut rng);
            let shuffled = run_script(&events);
            prop_assert_eq!(forward, shuffled);
        }
    }
}
