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

//! Outage localization over deviation signals.
//!
//! When a signal fires, each deviation is attributed to the geolocation
//! meanings it lost: a withdrawal loses everything its old communities
//! resolved to, a community change loses the meanings absent from the new
//! set. If one location concentrates enough of the signal, that location
//! is called out as the likely outage site.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use thiserror::Error;

use crate::bgp::{bin_index, BgpUpdate, Community, RouteKey, UpdateKind};
use crate::detector::Signal;
use crate::dictionary::{Dictionary, GeoLocation, Meaning};

pub const DEFAULT_MIN_CONCENTRATION: f64 = 0.5;
pub const DEFAULT_MIN_ATTRIBUTED: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct OutageConfig {
    /// Minimum fraction of the signal attributable to one location.
    pub min_concentration: f64,
    /// Minimum number of deviations attributed to that location.
    pub min_attributed: u64,
}

impl Default for OutageConfig {
    fn default() -> Self {
        OutageConfig {
            min_concentration: DEFAULT_MIN_CONCENTRATION,
            min_attributed: DEFAULT_MIN_ATTRIBUTED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OutageConfigError {
    #[error("min_concentration must be in (0, 1], got {0}")]
    InvalidConcentration(f64),
    #[error("min_attributed must be at least 1")]
    InvalidAttributed,
}

impl OutageConfig {
    pub fn validate(&self) -> Result<(), OutageConfigError> {
        if !(self.min_concentration > 0.0 && self.min_concentration <= 1.0) {
            return Err(OutageConfigError::InvalidConcentration(self.min_concentration));
        }
        if self.min_attributed == 0 {
            return Err(OutageConfigError::InvalidAttributed);
        }
        Ok(())
    }
}

/// Per-location attribution for one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageReport {
    pub location: GeoLocation,
    /// Deviations in the signal that lost this location.
    pub attributed: u64,
    /// Distinct deviating keys in the signal.
    pub total: u64,
    pub concentration: f64,
    /// True when both verdict gates passed.
    pub outage: bool,
}

/// Attributes a signal's deviations to lost locations. Reports come back
/// ordered by concentration (descending), then by location.
pub fn investigate_outage(signal: &Signal, cfg: &OutageConfig) -> Vec<OutageReport> {
    let total = signal.count;
    if total == 0 {
        return Vec::new();
    }
    let mut attributed: BTreeMap<GeoLocation, u64> = BTreeMap::new();
    for deviation in &signal.deviations {
        for meaning in &deviation.removed_meanings {
            if let Meaning::Geolocation(location) = meaning {
                *attributed.entry(location.clone()).or_insert(0) += 1;
            }
        }
    }
    let mut reports: Vec<OutageReport> = attributed
        .into_iter()
        .map(|(location, count)| {
            let concentration = count as f64 / total as f64;
            OutageReport {
                location,
                attributed: count,
                total,
                concentration,
                outage: concentration >= cfg.min_concentration && count >= cfg.min_attributed,
            }
        })
        .collect();
    reports.sort_by(|a, b| {
        b.concentration
            .partial_cmp(&a.concentration)
            .expect("concentrations are finite")
            .then_with(|| a.location.cmp(&b.location))
    });
    reports
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinActivity {
    pub announcements: u64,
    pub withdrawals: u64,
}

/// Per-bin announcement/withdrawal counts, total and per location.
///
/// Withdrawals carry no communities, so their location comes from the
/// last community set seen for the route key. Every per-location count
/// is therefore bounded by the unfiltered count in the same bin.
#[derive(Debug, Clone)]
pub struct ActivityTracker {
    bin_width: i64,
    unfiltered: BTreeMap<i64, BinActivity>,
    per_location: BTreeMap<GeoLocation, BTreeMap<i64, BinActivity>>,
    last_communities: BTreeMap<RouteKey, BTreeSet<Community>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("bin width must be positive, got {0}")]
pub struct InvalidActivityBinWidth(pub i64);

impl ActivityTracker {
    pub fn new(bin_width: i64) -> Result<Self, InvalidActivityBinWidth> {
        if bin_width <= 0 {
            return Err(InvalidActivityBinWidth(bin_width));
        }
        Ok(ActivityTracker {
            bin_width,
            unfiltered: BTreeMap::new(),
            per_location: BTreeMap::new(),
            last_communities: BTreeMap::new(),
        })
    }

    pub fn observe(&mut self, dictionary: &Dictionary, update: &BgpUpdate) {
        let bin = bin_index(update.timestamp, self.bin_width)
            .expect("bin width validated at construction");
        let slot = self.unfiltered.entry(bin).or_default();
        let communities = match update.kind {
            UpdateKind::Announcement => {
                slot.announcements += 1;
                self.last_communities
                    .insert(update.key(), update.communities.clone());
                &update.communities
            }
            UpdateKind::Withdrawal => {
                slot.withdrawals += 1;
                match self.last_communities.get(&update.key()) {
                    Some(set) => set,
                    None => return, // no known tags, nothing to attribute
                }
            }
        };
        let mut locations = BTreeSet::new();
        for meaning in dictionary.annotate(communities.iter()) {
            if let Meaning::Geolocation(location) = meaning {
                locations.insert(location);
            }
        }
        for location in locations {
            let slot = self
                .per_location
                .entry(location)
                .or_default()
                .entry(bin)
                .or_default();
            match update.kind {
                UpdateKind::Announcement => slot.announcements += 1,
                UpdateKind::Withdrawal => slot.withdrawals += 1,
            }
        }
    }

    /// Locations with any attributed activity, in order.
    pub fn locations(&self) -> impl Iterator<Item = &GeoLocation> {
        self.per_location.keys()
    }

    /// Dense per-bin series over the full observed bin range. `filter`
    /// selects one location's share; None gives the unfiltered totals.
    pub fn series(&self, filter: Option<&GeoLocation>) -> Vec<(i64, BinActivity)> {
        let (Some((&first, _)), Some((&last, _))) =
            (self.unfiltered.first_key_value(), self.unfiltered.last_key_value())
        else {
            return Vec::new();
        };
        let source = match filter {
            None => Some(&self.unfiltered),
            Some(location) => self.per_location.get(location),
        };
        (first..=last)
            .map(|bin| {
                let activity = source
                    .and_then(|map| map.get(&bin))
                    .copied()
                    .unwrap_or_default();
                (bin * self.bin_width, activity)
            })
            .collect()
    }
}

/// Writes a series as CSV: bin_start,announcements,withdrawals.
pub fn write_series_csv<W: Write>(series: &[(i64, BinActivity)], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_start", "announcements", "withdrawals"])
        .map_err(csv_io_error)?;
    for (bin_start, activity) in series {
        w.write_record([
            bin_start.to_string(),
            activity.announcements.to_string(),
            activity.withdrawals.to_string(),
        ])
        .map_err(csv_io_error)?;
    }
    w.flush()
}

fn csv_io_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgp::{AsPath, PeerId, Prefix};
    use crate::detector::{Deviation, DeviationKind};
    use crate::dictionary::{DictionaryEntry, GeoScope, ValueSpec};
    use proptest::prelude::*;

    fn peer() -> PeerId {
        PeerId::new(64496, "203.0.113.1")
    }

    fn key(prefix: &str) -> RouteKey {
        RouteKey::new(peer(), prefix.parse::<Prefix>().unwrap())
    }

    fn geo(scope: GeoScope, label: &str) -> GeoLocation {
        GeoLocation::new(scope, label)
    }

    fn withdrawal_dev(prefix: &str, lost: &[GeoLocation]) -> Deviation {
        Deviation {
            timestamp: 0,
            key: key(prefix),
            kind: DeviationKind::Withdrawal,
            old_communities: BTreeSet::new(),
            new_communities: BTreeSet::new(),
            removed_meanings: lost.iter().cloned().map(Meaning::Geolocation).collect(),
            added_meanings: BTreeSet::new(),
            new_path: None,
        }
    }

    fn signal_of(deviations: Vec<Deviation>) -> Signal {
        Signal {
            bin: 0,
            bin_start: 0,
            bin_end: 60,
            count: deviations.len() as u64,
            threshold: 1,
            deviations,
        }
    }

    #[test]
    fn concentrated_location_is_called_an_outage() {
        let ix = geo(GeoScope::Ixp, "TestIX");
        let city = geo(GeoScope::City, "Lisbon");
        let mut deviations = Vec::new();
        for i in 0..10 {
            deviations.push(withdrawal_dev(&format!("10.0.{i}.0/24"), &[ix.clone()]));
        }
        for i in 0..2 {
            deviations.push(withdrawal_dev(&format!("10.1.{i}.0/24"), &[city.clone()]));
        }
        for i in 0..3 {
            deviations.push(withdrawal_dev(&format!("10.2.{i}.0/24"), &[]));
        }
        let reports = investigate_outage(&signal_of(deviations), &OutageConfig::default());
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].location, ix);
        assert_eq!(reports[0].attributed, 10);
        assert_eq!(reports[0].total, 15);
        assert!(reports[0].outage);
        assert_eq!(reports[1].location, city);
        assert!(!reports[1].outage);
    }

    #[test]
    fn verdict_gates_are_inclusive() {
        let ix = geo(GeoScope::Ixp, "EdgeIX");
        // Exactly half the signal and exactly min_attributed.
        let mut deviations = Vec::new();
        for i in 0..10 {
            deviations.push(withdrawal_dev(&format!("10.0.{i}.0/24"), &[ix.clone()]));
        }
        for i in 0..10 {
            deviations.push(withdrawal_dev(&format!("10.1.{i}.0/24"), &[]));
        }
        let reports = investigate_outage(&signal_of(deviations), &OutageConfig::default());
        assert!((reports[0].concentration - 0.5).abs() < 1e-12);
        assert!(reports[0].outage);
    }

    #[test]
    fn below_attribution_floor_is_not_an_outage() {
        let ix = geo(GeoScope::Ixp, "SmallIX");
        let deviations = (0..5)
            .map(|i| withdrawal_dev(&format!("10.0.{i}.0/24"), &[ix.clone()]))
            .collect();
        // Concentration 1.0 but only 5 attributed, floor is 10.
        let signal = signal_of(deviations);
        let reports = investigate_outage(&signal, &OutageConfig::default());
        assert!(!reports[0].outage);
        // A lower floor flips the verdict.
        let relaxed = OutageConfig { min_attributed: 5, ..OutageConfig::default() };
        let reports = investigate_outage(&signal, &relaxed);
        assert!(reports[0].outage);
    }

    #[test]
    fn reports_order_by_concentration_then_location() {
        let a = geo(GeoScope::City, "Aa");
        let b = geo(GeoScope::City, "Bb");
        let c = geo(GeoScope::Country, "CC");
        let mut deviations = vec![
            withdrawal_dev("10.0.0.0/24", &[a.clone(), b.clone()]),
            withdrawal_dev("10.0.1.0/24", &[a.clone(), b.clone()]),
            withdrawal_dev("10.0.2.0/24", &[c.clone()]),
            withdrawal_dev("10.0.3.0/24", &[]),
        ];
        deviations.rotate_left(2);
        let reports = investigate_outage(&signal_of(deviations), &OutageConfig::default());
        let order: Vec<&GeoLocation> = reports.iter().map(|r| &r.location).collect();
        assert_eq!(order, vec![&a, &b, &c]);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        assert!(OutageConfig::default().validate().is_ok());
        assert!(OutageConfig { min_concentration: 0.0, ..Default::default() }
            .validate()
            .is_err());
        assert!(OutageConfig { min_concentration: 1.1, ..Default::default() }
            .validate()
            .is_err());
        assert!(OutageConfig { min_attributed: 0, ..Default::default() }
            .validate()
            .is_err());
    }

    fn tracker_dict() -> Dictionary {
        Dictionary::from_entries(vec![DictionaryEntry {
            asn: 64500,
            spec: ValueSpec::exact(100),
            meaning: Meaning::Geolocation(geo(GeoScope::Ixp, "TestIX")),
            description: String::new(),
        }])
    }

    fn tagged_announce(ts: i64, prefix: &str) -> BgpUpdate {
        BgpUpdate::announcement(
            ts,
            peer(),
            prefix.parse().unwrap(),
            AsPath::new(vec![64496, 64500]),
            BTreeSet::from(["64500:100".parse().unwrap()]),
        )
        .unwrap()
    }

    fn plain_announce(ts: i64, prefix: &str) -> BgpUpdate {
        BgpUpdate::announcement(
            ts,
            peer(),
            prefix.parse().unwrap(),
            AsPath::new(vec![64496, 64500]),
            BTreeSet::new(),
        )
        .unwrap()
    }

    fn withdraw(ts: i64, prefix: &str) -> BgpUpdate {
        BgpUpdate::withdrawal(ts, peer(), prefix.parse().unwrap())
    }

    #[test]
    fn withdrawals_attribute_to_last_known_location() {
        let dict = tracker_dict();
        let mut tracker = ActivityTracker::new(60).unwrap();
        tracker.observe(&dict, &tagged_announce(10, "10.0.0.0/24"));
        tracker.observe(&dict, &withdraw(70, "10.0.0.0/24"));
        // Never-seen key: withdrawal counts only in the unfiltered series.
        tracker.observe(&dict, &withdraw(75, "10.9.0.0/24"));
        let ix = geo(GeoScope::Ixp, "TestIX");
        let filtered = tracker.series(Some(&ix));
        assert_eq!(filtered.len(), 2);
        assert_eq!(filtered[0], (0, BinActivity { announcements: 1, withdrawals: 0 }));
        assert_eq!(filtered[1], (60, BinActivity { announcements: 0, withdrawals: 1 }));
        let unfiltered = tracker.series(None);
        assert_eq!(unfiltered[1].1.withdrawals, 2);
    }

    #[test]
    fn series_is_dense_over_observed_range() {
        let dict = tracker_dict();
        let mut tracker = ActivityTracker::new(60).unwrap();
        tracker.observe(&dict, &plain_announce(0, "10.0.0.0/24"));
        tracker.observe(&dict, &plain_announce(300, "10.0.1.0/24"));
        let series = tracker.series(None);
        assert_eq!(series.len(), 6); // bins 0..=5
        assert_eq!(series[2], (120, BinActivity::default()));
    }

    #[test]
    fn empty_tracker_yields_empty_series() {
        let tracker = ActivityTracker::new(60).unwrap();
        assert!(tracker.series(None).is_empty());
        assert!(ActivityTracker::new(0).is_err());
    }

    #[test]
    fn series_csv_has_expected_shape() {
        let dict = tracker_dict();
        let mut tracker = ActivityTracker::new(60).unwrap();
        tracker.observe(&dict, &tagged_announce(10, "10.0.0.0/24"));
        tracker.observe(&dict, &withdraw(70, "10.0.0.0/24"));
        let mut out = Vec::new();
        write_series_csv(&tracker.series(None), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "bin_start,announcements,withdrawals\n0,1,0\n60,0,1\n");
    }

    proptest! {
        // Per-location counts never exceed the unfiltered counts, bin by bin.
        #[test]
        fn filtered_series_bounded_by_unfiltered(
            ops in proptest::collection::vec((0i64..600, 0u8..4, any::<bool>()), 1..60)
        ) {
            let dict = tracker_dict();
            let mut tracker = ActivityTracker::new(60).unwrap();
            for (ts, route, is_announce) in ops {
                let prefix = format!("10.0.{route}.0/24");
                let u = if is_announce {
                    if route % 2 == 0 { tagged_announce(ts, &prefix) } else { plain_announce(ts, &prefix) }
                } else {
                    withdraw(ts, &prefix)
                };
                tracker.observe(&dict, &u);
            }
            let unfiltered = tracker.series(None);
            let locations: Vec<GeoLocation> = tracker.locations().cloned().collect();
            for location in locations {
                let filtered = tracker.series(Some(&location));
                prop_assert_eq!(filtered.len(), unfiltered.len());
                for (f, u) in filtered.iter().zip(unfiltered.iter()) {
                    prop_assert_eq!(f.0, u.0);
                    prop_assert!(f.1.announcements <= u.1.announcements);
                    prop_assert!(f.1.withdrawals <= u.1.withdrawals);
                }
            }
        }
    }
}
