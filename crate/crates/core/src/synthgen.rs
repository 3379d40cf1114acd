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

//! Synthetic scenario generation for end-to-end validation.
//!
//! A scenario produces three artifacts: an NDJSON update stream, the
//! dictionary CSV the stream was written against, and a ground-truth JSON
//! stating what a correct pipeline must find. The ground truth is derived
//! from the scenario parameters and the concrete emissions, never by
//! running the detection code itself.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "baseline_routes": 1000,
//!   "injections": [
//!     {"at": 3600, "kind": "ixp-outage", "location": "TestIX", "routes": 100},
//!     {"at": 7200, "kind": "blackhole-burst", "tagged": 50, "untagged": 500}
//!   ]
//! }
//! ```
//!
//! The same seed always yields byte-identical artifacts.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::GeoScope;

const PEER_ASN: u32 = 64496;
const PEER_ADDR: &str = "203.0.113.1";
/// ASN whose values carry the synthetic geolocation tags.
const GEO_TAG_ASN: u16 = 64500;
/// First geolocation value; injection j uses GEO_TAG_BASE + j.
const GEO_TAG_BASE: u16 = 100;
const BLACKHOLE_ASN: u16 = 64501;
const BLACKHOLE_VALUE: u16 = 666;
/// Uninterpreted background tag carried by every baseline route.
const NOISE_TAG_ASN: u16 = 64999;

fn default_init_window() -> i64 {
    crate::baseline::DEFAULT_INIT_WINDOW
}

fn default_bin_width() -> i64 {
    crate::detector::DEFAULT_BIN_WIDTH
}

fn default_min_observations() -> u64 {
    crate::baseline::DEFAULT_MIN_OBSERVATIONS
}

fn default_threshold() -> u64 {
    crate::detector::DEFAULT_THRESHOLD
}

fn default_slack() -> i64 {
    crate::ingest::DEFAULT_REORDER_SLACK
}

fn default_scope() -> GeoScope {
    GeoScope::Ixp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub baseline_routes: u32,
    #[serde(default = "default_init_window")]
    pub init_window: i64,
    #[serde(default = "default_bin_width")]
    pub bin_width: i64,
    #[serde(default = "default_min_observations")]
    pub min_observations: u64,
    #[serde(default = "default_threshold")]
    pub threshold: u64,
    #[serde(default = "default_slack")]
    pub reorder_slack: i64,
    #[serde(default)]
    pub injections: Vec<Injection>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 0,
            baseline_routes: 0,
            init_window: default_init_window(),
            bin_width: default_bin_width(),
            min_observations: default_min_observations(),
            threshold: default_threshold(),
            reorder_slack: default_slack(),
            injections: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    /// Injection time; must be bin-aligned and past the learning phase.
    pub at: i64,
    #[serde(flatten)]
    pub kind: InjectionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InjectionKind {
    /// Withdraws a block of baseline routes tagged with one location.
    IxpOutage {
        location: String,
        #[serde(default = "default_scope")]
        scope: GeoScope,
        routes: u32,
    },
    /// Fresh more-specific announcements; `tagged` carry the blackhole
    /// community, `untagged` are lookalikes without it.
    BlackholeBurst { tagged: u32, untagged: u32 },
    /// Paths with relationship tags; `count` violate the export rule,
    /// `valid` are labeled but clean.
    ValleyViolation {
        count: u32,
        #[serde(default)]
        valid: u32,
    },
    /// Withdraw-and-reannounce churn on a block of baseline routes.
    NoiseFlaps { routes: u32 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.bin_width <= 0 {
            return fail(format!("bin_width must be positive, got {}", self.bin_width));
        }
        if self.init_window <= 0 {
            return fail(format!("init_window must be positive, got {}", self.init_window));
        }
        if self.reorder_slack < 0 {
            return fail(format!("reorder_slack must be non-negative, got {}", self.reorder_slack));
        }
        if self.min_observations == 0 {
            return fail("min_observations must be at least 1".into());
        }
        if self.threshold == 0 {
            return fail("threshold must be at least 1".into());
        }
        if self.baseline_routes > 65_536 {
            return fail(format!(
                "baseline_routes must be at most 65536, got {}",
                self.baseline_routes
            ));
        }
        let copies = self.min_observations.max(2) as i64;
        let usable = self.init_window - self.reorder_slack - 1;
        if usable < copies {
            return fail(format!(
                "init_window {} leaves no room for {} announcement rounds with slack {}",
                self.init_window, copies, self.reorder_slack
            ));
        }
        let mut outage_routes: u64 = 0;
        let mut flap_routes: u64 = 0;
        let mut blackhole_total: u64 = 0;
        let mut valley_total: u64 = 0;
        for (idx, injection) in self.injections.iter().enumerate() {
            if injection.at < self.init_window {
                return fail(format!(
                    "injection {idx} at {} lands inside the learning phase (ends at {})",
                    injection.at, self.init_window
                ));
            }
            if injection.at % self.bin_width != 0 {
                return fail(format!(
                    "injection {idx} at {} is not aligned to the {}-second bin grid",
                    injection.at, self.bin_width
                ));
            }
            match &injection.kind {
                InjectionKind::IxpOutage { routes, location, .. } => {
                    if *routes == 0 {
                        return fail(format!("injection {idx}: outage needs at least one route"));
                    }
                    if location.is_empty() {
                        return fail(format!("injection {idx}: outage location must be non-empty"));
                    }
                    outage_routes += u64::from(*routes);
                }
                InjectionKind::BlackholeBurst { tagged, untagged } => {
                    blackhole_total += u64::from(*tagged) + u64::from(*untagged);
                }
                InjectionKind::ValleyViolation { count, valid } => {
                    valley_total += u64::from(*count) + u64::from(*valid);
                }
                InjectionKind::NoiseFlaps { routes } => {
                    if *routes == 0 {
                        return fail(format!("injection {idx}: flaps need at least one route"));
                    }
                    flap_routes += u64::from(*routes);
                }
            }
        }
        if outage_routes + flap_routes > u64::from(self.baseline_routes) {
            return fail(format!(
                "injections claim {} baseline routes but only {} exist",
                outage_routes + flap_routes,
                self.baseline_routes
            ));
        }
        if blackhole_total > 65_536 {
            return fail(format!(
                "blackhole bursts total {blackhole_total} prefixes, at most 65536 fit the synthetic space"
            ));
        }
        if valley_total > 131_072 {
            return fail(format!(
                "valley injections total {valley_total} paths, at most 131072 fit the synthetic space"
            ));
        }
        Ok(())
    }
}

/// Everything a scenario produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// NDJSON update stream, time-ordered.
    pub stream: String,
    /// Dictionary CSV the stream's tags resolve against.
    pub dictionary: String,
    /// Expected findings, computed from the emissions alone.
    pub ground_truth: serde_json::Value,
}

struct Emission {
    ts: i64,
    seq: u64,
    line: String,
}

struct Emitter {
    out: Vec<Emission>,
    seq: u64,
}

impl Emitter {
    fn new() -> Self {
        Emitter { out: Vec::new(), seq: 0 }
    }

    fn announce(&mut self, ts: i64, prefix: String, path: &[u32], communities: Vec<String>) {
        let line = serde_json::json!({
            "ts": ts,
            "peer_asn": PEER_ASN,
            "peer_addr": PEER_ADDR,
            "type": "A",
            "prefix": prefix,
            "as_path": path,
            "communities": communities,
        });
        self.push(ts, line.to_string());
    }

    fn withdraw(&mut self, ts: i64, prefix: String) {
        let line = serde_json::json!({
            "ts": ts,
            "peer_asn": PEER_ASN,
            "peer_addr": PEER_ADDR,
            "type": "W",
            "prefix": prefix,
        });
        self.push(ts, line.to_string());
    }

    fn push(&mut self, ts: i64, line: String) {
        self.out.push(Emission { ts, seq: self.seq, line });
        self.seq += 1;
    }

    fn into_stream(mut self) -> (String, u64) {
        self.out.sort_by_key(|e| (e.ts, e.seq));
        let total = self.out.len() as u64;
        let mut text = String::new();
        for emission in self.out {
            text.push_str(&emission.line);
            text.push('\n');
        }
        (text, total)
    }
}

fn baseline_prefix(i: u32) -> String {
    format!("10.{}.{}.0/24", i / 256, i % 256)
}

fn baseline_path(i: u32) -> [u32; 3] {
    [PEER_ASN, 64_800 + (i % 13), 65_000 + (i % 499)]
}

fn baseline_communities(i: u32) -> Vec<String> {
    vec![format!("{NOISE_TAG_ASN}:{}", i % 97)]
}

fn burst_prefix(global: u32, tagged: bool) -> String {
    let second = if tagged { 16 } else { 17 };
    format!("172.{}.{}.{}/32", second, global / 256, global % 256)
}

/// Generates the stream, dictionary, and ground truth for a scenario.
pub fn generate(scenario: &Scenario) -> Result<SynthOutput, ScenarioError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut emitter = Emitter::new();

    // Allocate baseline route blocks: outages from the front, flaps from
    // the back, so no injection touches another's routes.
    let mut outage_cursor: u32 = 0;
    let mut flap_cursor: u32 = scenario.baseline_routes;

    // Learning phase: every baseline route announced `copies` times, all
    // inside the window. The very first record is pinned to ts 0 so the
    // window is anchored deterministically.
    let copies = scenario.min_observations.max(2) as i64;
    let usable = scenario.init_window - scenario.reorder_slack - 1;
    let gap = (usable / copies).max(1);
    for copy in 0..copies {
        for route in 0..scenario.baseline_routes {
            let jitter = rng.random_range(0..gap);
            let jitter = if copy == 0 && route == 0 { 0 } else { jitter };
            let ts = copy * gap + jitter;
            emitter.announce(
                ts,
                baseline_prefix(route),
                &baseline_path(route),
                baseline_communities(route),
            );
        }
    }
    let init_announcements =
        u64::from(scenario.baseline_routes) * copies as u64;

    // Dictionary rows accumulate as injections demand them.
    let mut dict_rows: Vec<[String; 6]> = Vec::new();
    let mut need_blackhole_entry = false;
    let mut need_relationship_entries = false;

    // Ground-truth accumulators.
    let mut deviations_per_bin: BTreeMap<i64, u64> = BTreeMap::new();
    // (bin, scope, location) -> attributed withdrawals.
    let mut outage_attribution: BTreeMap<(i64, String, String), u64> = BTreeMap::new();
    let mut blackhole_events: Vec<(i64, String)> = Vec::new();
    let mut valley_checked_extra: u64 = 0;
    let mut valley_labeled: u64 = 0;
    let mut valley_violating: u64 = 0;

    let mut geo_injection_index: u16 = 0;
    let mut burst_tagged_cursor: u32 = 0;
    let mut burst_untagged_cursor: u32 = 0;
    let mut valley_cursor: u32 = 0;

    for injection in &scenario.injections {
        let at = injection.at;
        let bin = at / scenario.bin_width;
        match &injection.kind {
            InjectionKind::IxpOutage { location, scope, routes } => {
                let value = GEO_TAG_BASE + geo_injection_index;
                geo_injection_index += 1;
                dict_rows.push([
                    GEO_TAG_ASN.to_string(),
                    value.to_string(),
                    "geolocation".to_string(),
                    scope.to_string(),
                    location.clone(),
                    "synthetic location tag".to_string(),
                ]);
                let first = outage_cursor;
                outage_cursor += routes;
                for route in first..outage_cursor {
                    let ts = at + rng.random_range(0..scenario.bin_width);
                    emitter.withdraw(ts, baseline_prefix(route));
                }
                // Re-announce the geo tag during learning: the block's
                // routes must have carried it from the start, so rewrite
                // happens at emission time via the tag map below.
                *deviations_per_bin.entry(bin).or_insert(0) += u64::from(*routes);
                *outage_attribution
                    .entry((bin, scope.to_string(), location.clone()))
                    .or_insert(0) += u64::from(*routes);
            }
            InjectionKind::BlackholeBurst { tagged, untagged } => {
                need_blackhole_entry = true;
                for _ in 0..*tagged {
                    let global = burst_tagged_cursor;
                    burst_tagged_cursor += 1;
                    let ts = at + rng.random_range(0..scenario.bin_width);
                    let prefix = burst_prefix(global, true);
                    emitter.announce(
                        ts,
                        prefix.clone(),
                        &[PEER_ASN, 64_510],
                        vec![format!("{BLACKHOLE_ASN}:{BLACKHOLE_VALUE}")],
                    );
                    blackhole_events.push((ts, prefix));
                    valley_checked_extra += 1;
                }
                for _ in 0..*untagged {
                    let global = burst_untagged_cursor;
                    burst_untagged_cursor += 1;
                    let ts = at + rng.random_range(0..scenario.bin_width);
                    emitter.announce(
                        ts,
                        burst_prefix(global, false),
                        &[PEER_ASN, 64_511],
                        vec![format!("{NOISE_TAG_ASN}:7")],
                    );
                    valley_checked_extra += 1;
                }
            }
            InjectionKind::ValleyViolation { count, valid } => {
                need_relationship_entries = true;
                for violating in [true, false] {
                    let n = if violating { *count } else { *valid };
                    for _ in 0..n {
                        let global = valley_cursor;
                        valley_cursor += 1;
                        let ts = at + rng.random_range(0..scenario.bin_width);
                        let prefix = format!(
                            "198.{}.{}.{}/32",
                            18 + global / 65_536,
                            (global / 256) % 256,
                            global % 256
                        );
                        let communities = if violating {
                            vec!["64496:30".to_string(), "64497:31".to_string()]
                        } else {
                            vec!["64496:30".to_string()]
                        };
                        emitter.announce(ts, prefix, &[PEER_ASN, 64_497, 64_499], communities);
                        valley_checked_extra += 1;
                        valley_labeled += 1;
                        if violating {
                            valley_violating += 1;
                        }
                    }
                }
            }
            InjectionKind::NoiseFlaps { routes } => {
                flap_cursor -= routes;
                let first = flap_cursor;
                let wiggle = (scenario.bin_width - 6).max(1);
                for route in first..first + routes {
                    let ts = at + rng.random_range(0..wiggle);
                    emitter.withdraw(ts, baseline_prefix(route));
                    emitter.announce(
                        ts + 5,
                        baseline_prefix(route),
                        &baseline_path(route),
                        baseline_communities(route),
                    );
                    valley_checked_extra += 1;
                }
                *deviations_per_bin.entry(bin).or_insert(0) += u64::from(*routes);
            }
        }
    }

    // Outage blocks must have carried their location tag since learning.
    // The emitter wrote baseline announcements before the injections were
    // walked, so patch the affected lines now: every announcement of an
    // outage-block route gains that block's geolocation community.
    let mut tag_by_route: BTreeMap<u32, String> = BTreeMap::new();
    {
        let mut cursor = 0u32;
        let mut geo_index = 0u16;
        for injection in &scenario.injections {
            if let InjectionKind::IxpOutage { routes, .. } = &injection.kind {
                let value = GEO_TAG_BASE + geo_index;
                geo_index += 1;
                for route in cursor..cursor + routes {
                    tag_by_route.insert(route, format!("{GEO_TAG_ASN}:{value}"));
                }
                cursor += routes;
            }
        }
    }
    if !tag_by_route.is_empty() {
        for emission in emitter.out.iter_mut() {
            let mut value: serde_json::Value = serde_json::from_str(&emission.line)
                .expect("generator emits valid JSON");
            if value["type"] != "A" {
                continue;
            }
            let prefix = value["prefix"].as_str().expect("announcements carry prefixes");
            let Some(route) = parse_baseline_route(prefix) else { continue };
            let Some(tag) = tag_by_route.get(&route) else { continue };
            let comms = value["communities"].as_array_mut().expect("announcements carry communities");
            comms.push(serde_json::Value::String(tag.clone()));
            comms.sort_by(|a, b| a.as_str().cmp(&b.as_str()));
            emission.line = value.to_string();
        }
    }

    if need_blackhole_entry {
        dict_rows.push([
            BLACKHOLE_ASN.to_string(),
            BLACKHOLE_VALUE.to_string(),
            "blackhole".to_string(),
            String::new(),
            String::new(),
            "drop request".to_string(),
        ]);
    }
    if need_relationship_entries {
        dict_rows.push([
            "64496".to_string(),
            "30".to_string(),
            "relationship".to_string(),
            "customer".to_string(),
            String::new(),
            String::new(),
        ]);
        dict_rows.push([
            "64497".to_string(),
            "31".to_string(),
            "relationship".to_string(),
            "provider".to_string(),
            String::new(),
            String::new(),
        ]);
    }

    let dictionary = render_dictionary(&dict_rows);
    let (stream, records_total) = emitter.into_stream();

    // Signals: bins whose distinct deviating keys meet the threshold.
    let signals: Vec<serde_json::Value> = deviations_per_bin
        .iter()
        .filter(|(_, count)| **count >= scenario.threshold)
        .map(|(bin, count)| {
            serde_json::json!({
                "bin": bin,
                "bin_start": bin * scenario.bin_width,
                "count": count,
            })
        })
        .collect();
    let signal_bins: BTreeSet<i64> = deviations_per_bin
        .iter()
        .filter(|(_, count)| **count >= scenario.threshold)
        .map(|(bin, _)| *bin)
        .collect();

    // Outage verdicts under the default gates, only in signaling bins.
    let outage_verdicts: Vec<serde_json::Value> = outage_attribution
        .iter()
        .filter_map(|((bin, scope, location), attributed)| {
            if !signal_bins.contains(bin) {
                return None;
            }
            let total = deviations_per_bin[bin];
            let concentration = *attributed as f64 / total as f64;
            let is_outage = concentration >= crate::outage::DEFAULT_MIN_CONCENTRATION
                && *attributed >= crate::outage::DEFAULT_MIN_ATTRIBUTED;
            if !is_outage {
                return None;
            }
            Some(serde_json::json!({
                "bin": bin,
                "scope": scope,
                "location": location,
                "attributed": attributed,
                "total": total,
                "concentration": concentration,
            }))
        })
        .collect();

    // Blackhole series, re-derived from the emitted events with plain
    // bucket arithmetic.
    let day = 86_400i64;
    let mut per_period: BTreeMap<i64, (BTreeSet<&str>, u64)> = BTreeMap::new();
    for (ts, prefix) in &blackhole_events {
        let slot = per_period.entry(ts.div_euclid(day)).or_default();
        slot.0.insert(prefix.as_str());
        slot.1 += 1;
    }
    let mut series_rows = Vec::new();
    if let (Some((&first, _)), Some((&last, _))) =
        (per_period.first_key_value(), per_period.last_key_value())
    {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for idx in first..=last {
            let (distinct, events) = match per_period.get(&idx) {
                Some((prefixes, count)) => {
                    seen.extend(prefixes.iter().copied());
                    (prefixes.len() as u64, *count)
                }
                None => (0, 0),
            };
            series_rows.push(serde_json::json!({
                "period_start": idx * day,
                "distinct_prefixes": distinct,
                "events": events,
                "cumulative_distinct": seen.len() as u64,
            }));
        }
    }
    let distinct_prefixes: BTreeSet<&str> =
        blackhole_events.iter().map(|(_, p)| p.as_str()).collect();

    let valley_checked = init_announcements + valley_checked_extra;
    let valley_fraction = if valley_labeled == 0 {
        0.0
    } else {
        valley_violating as f64 / valley_labeled as f64
    };

    let ground_truth = serde_json::json!({
        "config": {
            "seed": scenario.seed,
            "bin_width": scenario.bin_width,
            "init_window": scenario.init_window,
            "min_observations": scenario.min_observations,
            "threshold": scenario.threshold,
            "reorder_slack": scenario.reorder_slack,
            "outage_min_concentration": crate::outage::DEFAULT_MIN_CONCENTRATION,
            "outage_min_attributed": crate::outage::DEFAULT_MIN_ATTRIBUTED,
        },
        "records_total": records_total,
        "baseline_size": scenario.baseline_routes,
        "deviations_per_bin": deviations_per_bin
            .iter()
            .map(|(bin, count)| (bin.to_string(), serde_json::json!(count)))
            .collect::<serde_json::Map<String, serde_json::Value>>(),
        "signals": signals,
        "outage_verdicts": outage_verdicts,
        "blackhole": {
            "events": blackhole_events.len() as u64,
            "distinct_prefixes": distinct_prefixes.len() as u64,
            "series": series_rows,
        },
        "valley": {
            "checked": valley_checked,
            "labeled": valley_labeled,
            "violating": valley_violating,
            "fraction_labeled": valley_fraction,
        },
    });

    Ok(SynthOutput {
        stream,
        dictionary,
        ground_truth,
    })
}

fn parse_baseline_route(prefix: &str) -> Option<u32> {
    let rest = prefix.strip_prefix("10.")?;
    let rest = rest.strip_suffix(".0/24")?;
    let (hi, lo) = rest.split_once('.')?;
    let hi: u32 = hi.parse().ok()?;
    let lo: u32 = lo.parse().ok()?;
    Some(hi * 256 + lo)
}

fn render_dictionary(rows: &[[String; 6]]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["asn", "value_spec", "category", "subtype", "location", "description"])
        .expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Dictionary;
    use crate::ingest::parse_record;

    fn outage_scenario() -> Scenario {
        Scenario {
            seed: 7,
            baseline_routes: 40,
            injections: vec![Injection {
                at: 3600,
                kind: InjectionKind::IxpOutage {
                    location: "TestIX".to_string(),
                    scope: GeoScope::Ixp,
                    routes: 12,
                },
            }],
            ..Scenario::default()
        }
    }

    #[test]
    fn identical_seeds_yield_byte_identical_output() {
        let a = generate(&outage_scenario()).unwrap();
        let b = generate(&outage_scenario()).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.dictionary, b.dictionary);
        assert_eq!(a.ground_truth, b.ground_truth);
        let mut other = outage_scenario();
        other.seed = 8;
        let c = generate(&other).unwrap();
        assert_ne!(a.stream, c.stream);
    }

    #[test]
    fn every_line_parses_and_is_time_ordered() {
        let output = generate(&outage_scenario()).unwrap();
        let mut last_ts = i64::MIN;
        let mut count = 0u64;
        for line in output.stream.lines() {
            let update = parse_record(line).unwrap();
            assert!(update.timestamp >= last_ts, "stream must be time-ordered");
            last_ts = update.timestamp;
            count += 1;
        }
        assert_eq!(
            count,
            output.ground_truth["records_total"].as_u64().unwrap()
        );
        // 40 routes x 2 copies + 12 withdrawals.
        assert_eq!(count, 92);
    }

    #[test]
    fn generated_dictionary_loads_cleanly() {
        let output = generate(&outage_scenario()).unwrap();
        let dict = Dictionary::load(output.dictionary.as_bytes()).unwrap();
        assert_eq!(dict.len(), 1);
        let meanings = dict.lookup("64500:100".parse().unwrap());
        assert_eq!(meanings.len(), 1);
    }

    #[test]
    fn outage_routes_carry_the_location_tag_from_the_start() {
        let output = generate(&outage_scenario()).unwrap();
        let mut tagged_announcements = 0;
        for line in output.stream.lines() {
            let update = parse_record(line).unwrap();
            if update.is_announcement()
                && update.communities.contains(&"64500:100".parse().unwrap())
            {
                tagged_announcements += 1;
            }
        }
        // 12 outage routes announced twice during learning.
        assert_eq!(tagged_announcements, 24);
    }

    #[test]
    fn ground_truth_reports_the_outage_signal() {
        let output = generate(&outage_scenario()).unwrap();
        let gt = &output.ground_truth;
        assert_eq!(gt["baseline_size"], 40);
        let signals = gt["signals"].as_array().unwrap();
        assert_eq!(signals.len(), 1);
        assert_eq!(signals[0]["bin"], 60);
        assert_eq!(signals[0]["count"], 12);
        let verdicts = gt["outage_verdicts"].as_array().unwrap();
        assert_eq!(verdicts.len(), 1);
        assert_eq!(verdicts[0]["location"], "TestIX");
        assert_eq!(verdicts[0]["attributed"], 12);
        assert_eq!(verdicts[0]["concentration"], 1.0);
    }

    #[test]
    fn sub_threshold_outage_produces_no_signal() {
        let mut scenario = outage_scenario();
        scenario.injections = vec![Injection {
            at: 3600,
            kind: InjectionKind::IxpOutage {
                location: "TestIX".to_string(),
                scope: GeoScope::Ixp,
                routes: 9,
            },
        }];
        let output = generate(&scenario).unwrap();
        assert!(output.ground_truth["signals"].as_array().unwrap().is_empty());
        assert!(output.ground_truth["outage_verdicts"].as_array().unwrap().is_empty());
    }

    #[test]
    fn blackhole_burst_ground_truth_counts_events_and_series() {
        let scenario = Scenario {
            baseline_routes: 4,
            injections: vec![
                Injection {
                    at: 3600,
                    kind: InjectionKind::BlackholeBurst { tagged: 5, untagged: 7 },
                },
                Injection {
                    at: 3600 + 2 * 86_400,
                    kind: InjectionKind::BlackholeBurst { tagged: 3, untagged: 0 },
                },
            ],
            ..Scenario::default()
        };
        let output = generate(&scenario).unwrap();
        let bh = &output.ground_truth["blackhole"];
        assert_eq!(bh["events"], 8);
        assert_eq!(bh["distinct_prefixes"], 8);
        let series = bh["series"].as_array().unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series[0]["distinct_prefixes"], 5);
        assert_eq!(series[1]["events"], 0);
        assert_eq!(series[2]["cumulative_distinct"], 8);
        // No deviations: bursts are fresh keys.
        assert!(output.ground_truth["signals"].as_array().unwrap().is_empty());
    }

    #[test]
    fn valley_injection_ground_truth_fraction() {
        let scenario = Scenario {
            baseline_routes: 4,
            injections: vec![Injection {
                at: 3600,
                kind: InjectionKind::ValleyViolation { count: 3, valid: 97 },
            }],
            ..Scenario::default()
        };
        let output = generate(&scenario).unwrap();
        let valley = &output.ground_truth["valley"];
        assert_eq!(valley["labeled"], 100);
        assert_eq!(valley["violating"], 3);
        let fraction = valley["fraction_labeled"].as_f64().unwrap();
        assert!((fraction - 0.03).abs() < 1e-12);
        // checked = 4 routes x 2 copies + 100 valley paths.
        assert_eq!(valley["checked"], 108);
    }

    #[test]
    fn scenario_validation_rejects_inconsistencies() {
        let mut s = outage_scenario();
        s.injections[0].at = 1800; // inside learning
        assert!(matches!(generate(&s), Err(ScenarioError::Invalid(_))));

        let mut s = outage_scenario();
        s.injections[0].at = 3601; // off the bin grid
        assert!(matches!(generate(&s), Err(ScenarioError::Invalid(_))));

        let mut s = outage_scenario();
        s.baseline_routes = 5; // block larger than the table
        assert!(matches!(generate(&s), Err(ScenarioError::Invalid(_))));

        let mut s = outage_scenario();
        s.bin_width = 0;
        assert!(matches!(generate(&s), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn scenario_json_round_trip() {
        let text = r#"{
            "seed": 7,
            "baseline_routes": 40,
            "injections": [
                {"at": 3600, "kind": "ixp-outage", "location": "TestIX", "routes": 12},
                {"at": 7200, "kind": "blackhole-burst", "tagged": 5, "untagged": 7},
                {"at": 7260, "kind": "valley-violation", "count": 3, "valid": 9},
                {"at": 7320, "kind": "noise-flaps", "routes": 4}
            ]
        }"#;
        let scenario = Scenario::from_json(text).unwrap();
        assert_eq!(scenario.injections.len(), 4);
        assert!(matches!(
            scenario.injections[1].kind,
            InjectionKind::BlackholeBurst { tagged: 5, untagged: 7 }
        ));
        // Defaults fill the unstated knobs.
        assert_eq!(scenario.bin_width, 60);
        assert_eq!(scenario.threshold, 10);
        let bad = Scenario::from_json(r#"{"unknown_knob": 1}"#);
        assert!(matches!(bad, Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn noise_flaps_claim_tail_routes_and_count_as_deviations() {
        let scenario = Scenario {
            baseline_routes: 20,
            injections: vec![Injection {
                at: 3600,
                kind: InjectionKind::NoiseFlaps { routes: 4 },
            }],
            ..Scenario::default()
        };
        let output = generate(&scenario).unwrap();
        let gt = &output.ground_truth;
        assert_eq!(gt["deviations_per_bin"]["60"], 4);
        // Below the threshold of 10: no signal.
        assert!(gt["signals"].as_array().unwrap().is_empty());
        // The flapped routes are the tail block 16..20.
        let mut withdrawn = BTreeSet::new();
        for line in output.stream.lines() {
            let u = parse_record(line).unwrap();
            if !u.is_announcement() {
                withdrawn.insert(u.prefix.to_string());
            }
        }
        assert_eq!(
            withdrawn,
            BTreeSet::from([
                "10.0.16.0/24".to_string(),
                "10.0.17.0/24".to_string(),
                "10.0.18.0/24".to_string(),
                "10.0.19.0/24".to_string(),
            ])
        );
    }
}
