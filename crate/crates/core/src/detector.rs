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

//! Deviation detection against a learned baseline.
//!
//! Updates are compared with the baseline entry for their route key. A
//! mismatch becomes a deviation, coalesced per key within each time bin
//! (the latest one wins). When a bin closes, its distinct deviating keys
//! are counted against the threshold; meeting it emits a [`Signal`].
//!
//! Closing a bin also re-admits its deviations into the baseline: a
//! community change becomes the new normal and a withdrawal removes the
//! key, so persistent conditions alarm once instead of every bin.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use thiserror::Error;

use crate::baseline::Baseline;
use crate::bgp::{bin_index, AsPath, BgpUpdate, Community, RouteKey, UpdateKind};
use crate::dictionary::{Dictionary, Meaning};

pub const DEFAULT_BIN_WIDTH: i64 = 60;
pub const DEFAULT_THRESHOLD: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DeviationKind {
    Withdrawal,
    CommunityChange,
    PathChange,
}

impl DeviationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviationKind::Withdrawal => "withdrawal",
            DeviationKind::CommunityChange => "community-change",
            DeviationKind::PathChange => "path-change",
        }
    }
}

impl std::fmt::Display for DeviationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One route key departing from its baseline within a bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deviation {
    pub timestamp: i64,
    pub key: RouteKey,
    pub kind: DeviationKind,
    pub old_communities: BTreeSet<Community>,
    pub new_communities: BTreeSet<Community>,
    /// Meanings present before but not after. For a withdrawal this is
    /// every meaning the old set resolved to.
    pub removed_meanings: BTreeSet<Meaning>,
    pub added_meanings: BTreeSet<Meaning>,
    /// Path observed on the deviating announcement; None for withdrawals.
    pub new_path: Option<AsPath>,
}

impl Deviation {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "peer_asn": self.key.peer.asn,
            "peer_addr": self.key.peer.addr,
            "prefix": self.key.prefix.to_string(),
            "kind": self.kind.as_str(),
            "old_communities": self.old_communities.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "new_communities": self.new_communities.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "removed_meanings": self.removed_meanings.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
            "added_meanings": self.added_meanings.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        })
    }
}

/// Emitted when a closed bin's distinct deviating keys meet the threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signal {
    pub bin: i64,
    pub bin_start: i64,
    pub bin_end: i64,
    /// Distinct deviating route keys in the bin.
    pub count: u64,
    /// Effective threshold the count was compared against.
    pub threshold: u64,
    /// Key-ordered deviations.
    pub deviations: Vec<Deviation>,
}

impl Signal {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "bin": self.bin,
            "bin_start": self.bin_start,
            "bin_end": self.bin_end,
            "count": self.count,
            "threshold": self.threshold,
            "deviations": self.deviations.iter().map(Deviation::to_json).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Fire at this many distinct deviating keys.
    Absolute(u64),
    /// Fire at ceil(fraction * baseline size), never below 1.
    Relative(f64),
}

impl Threshold {
    pub fn effective(&self, baseline_len: usize) -> u64 {
        match *self {
            Threshold::Absolute(k) => k,
            Threshold::Relative(f) => ((f * baseline_len as f64).ceil() as u64).max(1),
        }
    }

    fn validate(&self) -> Result<(), DetectorError> {
        match *self {
            Threshold::Absolute(k) if k >= 1 => Ok(()),
            Threshold::Absolute(_) => Err(DetectorError::InvalidThreshold(
                "absolute threshold must be at least 1".into(),
            )),
            Threshold::Relative(f) if f > 0.0 && f <= 1.0 => Ok(()),
            Threshold::Relative(_) => Err(DetectorError::InvalidThreshold(
                "relative threshold must be in (0, 1]".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(i64),
    #[error("reorder slack must be non-negative, got {0}")]
    InvalidSlack(i64),
    #[error("{0}")]
    InvalidThreshold(String),
    #[error("update targets bin {bin} which is already closed")]
    BinAlreadyClosed { bin: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub bin_width: i64,
    pub threshold: Threshold,
    pub slack: i64,
    pub detect_path_changes: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            bin_width: DEFAULT_BIN_WIDTH,
            threshold: Threshold::Absolute(DEFAULT_THRESHOLD),
            slack: crate::ingest::DEFAULT_REORDER_SLACK,
            detect_path_changes: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectorStats {
    /// Closed bins that held at least one deviation.
    pub bins_closed: u64,
    pub deviating_keys_total: u64,
    pub signals_emitted: u64,
}

/// Streaming detector. Feed updates through [`Detector::offer`]; closed-bin
/// signals come back in strictly increasing bin order.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    baseline: Baseline,
    open_bins: BTreeMap<i64, BTreeMap<RouteKey, Deviation>>,
    last_closed: Option<i64>,
    stats: DetectorStats,
}

impl Detector {
    pub fn new(baseline: Baseline, cfg: DetectorConfig) -> Result<Self, DetectorError> {
        if cfg.bin_width <= 0 {
            return Err(DetectorError::InvalidBinWidth(cfg.bin_width));
        }
        if cfg.slack < 0 {
            return Err(DetectorError::InvalidSlack(cfg.slack));
        }
        cfg.threshold.validate()?;
        Ok(Detector {
            cfg,
            baseline,
            open_bins: BTreeMap::new(),
            last_closed: None,
            stats: DetectorStats::default(),
        })
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn stats(&self) -> DetectorStats {
        self.stats
    }

    /// Closes every bin whose grace period has passed, then applies the
    /// update. Returns the signals from bins that closed.
    pub fn offer(
        &mut self,
        dictionary: &Dictionary,
        update: &BgpUpdate,
    ) -> Result<Vec<Signal>, DetectorError> {
        let signals = self.advance(update.timestamp);
        self.process_update(dictionary, update)?;
        Ok(signals)
    }

    /// Closes all bins with bin_end + slack <= now.
    pub fn advance(&mut self, now: i64) -> Vec<Signal> {
        // Bin b closes iff (b+1)*width <= now - slack; the largest such b
        // is floor((now - slack) / width) - 1.
        let cutoff = now.saturating_sub(self.cfg.slack);
        let closable = cutoff.div_euclid(self.cfg.bin_width) - 1;
        let signals = self.close_through(closable);
        self.last_closed = Some(self.last_closed.map_or(closable, |c| c.max(closable)));
        signals
    }

    /// Records the update's deviation, if any, into its bin.
    pub fn process_update(
        &mut self,
        dictionary: &Dictionary,
        update: &BgpUpdate,
    ) -> Result<(), DetectorError> {
        let bin = bin_index(update.timestamp, self.cfg.bin_width)
            .map_err(|_| DetectorError::InvalidBinWidth(self.cfg.bin_width))?;
        if let Some(closed) = self.last_closed {
            if bin <= closed {
                return Err(DetectorError::BinAlreadyClosed { bin });
            }
        }
        let key = update.key();
        let Some(entry) = self.baseline.get(&key) else {
            return Ok(()); // only baseline routes are monitored
        };
        let deviation = match update.kind {
            UpdateKind::Withdrawal => {
                let old = entry.communities.clone();
                let removed = dictionary.annotate(old.iter());
                Deviation {
                    timestamp: update.timestamp,
                    key: key.clone(),
                    kind: DeviationKind::Withdrawal,
                    old_communities: old,
                    new_communities: BTreeSet::new(),
                    removed_meanings: removed,
                    added_meanings: BTreeSet::new(),
                    new_path: None,
                }
            }
            UpdateKind::Announcement => {
                if update.communities != entry.communities {
                    let old_meanings = dictionary.annotate(entry.communities.iter());
                    let new_meanings = dictionary.annotate(update.communities.iter());
                    Deviation {
                        timestamp: update.timestamp,
                        key: key.clone(),
                        kind: DeviationKind::CommunityChange,
                        old_communities: entry.communities.clone(),
                        new_communities: update.communities.clone(),
                        removed_meanings: old_meanings.difference(&new_meanings).cloned().collect(),
                        added_meanings: new_meanings.difference(&old_meanings).cloned().collect(),
                        new_path: update.path.clone(),
                    }
                } else if self.cfg.detect_path_changes
                    && update.path.as_ref().map(AsPath::collapsed) != Some(entry.path.collapsed())
                {
                    Deviation {
                        timestamp: update.timestamp,
                        key: key.clone(),
                        kind: DeviationKind::PathChange,
                        old_communities: entry.communities.clone(),
                        new_communities: update.communities.clone(),
                        removed_meanings: BTreeSet::new(),
                        added_meanings: BTreeSet::new(),
                        new_path: update.path.clone(),
                    }
                } else {
                    // Conforming traffic never erases a pending deviation:
                    // the bin records that the key deviated at some point.
                    return Ok(());
                }
            }
        };
        self.open_bins.entry(bin).or_default().insert(key, deviation);
        Ok(())
    }

    /// Closes any still-open bins at end of stream.
    pub fn finish(&mut self) -> Vec<Signal> {
        let Some(&max_bin) = self.open_bins.keys().next_back() else {
            return Vec::new();
        };
        let signals = self.close_through(max_bin);
        self.last_closed = Some(self.last_closed.map_or(max_bin, |c| c.max(max_bin)));
        signals
    }

    fn close_through(&mut self, through: i64) -> Vec<Signal> {
        let mut signals = Vec::new();
        loop {
            let Some(&bin) = self.open_bins.keys().next() else { break };
            if bin > through {
                break;
            }
            let deviations = self.open_bins.remove(&bin).expect("key just observed");
            self.stats.bins_closed += 1;
            self.stats.deviating_keys_total += deviations.len() as u64;
            let count = deviations.len() as u64;
            let threshold = self.cfg.threshold.effective(self.baseline.len());
            let ordered: Vec<Deviation> = deviations.into_values().collect();
            // Re-admission: the bin's final word per key becomes the new
            // baseline state.
            for deviation in &ordered {
                match deviation.kind {
                    DeviationKind::Withdrawal => {
                        self.baseline.remove(&deviation.key);
                    }
                    DeviationKind::CommunityChange => {
                        self.baseline
                            .set_communities(&deviation.key, deviation.new_communities.clone());
                        if let Some(path) = &deviation.new_path {
                            self.baseline.set_path(&deviation.key, path.clone());
                        }
                    }
                    DeviationKind::PathChange => {
                        if let Some(path) = &deviation.new_path {
                            self.baseline.set_path(&deviation.key, path.clone());
                        }
                    }
                }
            }
            if count >= threshold {
                self.stats.signals_emitted += 1;
                signals.push(Signal {
                    bin,
                    bin_start: bin * self.cfg.bin_width,
                    bin_end: (bin + 1) * self.cfg.bin_width,
                    count,
                    threshold,
                    deviations: ordered,
                });
            }
        }
        signals
    }
}
