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

//! Valley-free violation detection from relationship communities.
//!
//! A relationship community tagged by AS A describes the neighbor A
//! learned the route from. With A at hop j of the collapsed path (hop 0
//! next to the collector, the last hop the origin), that neighbor is hop
//! j+1, so the community labels edge j: "hop j+1 is a <role> of hop j".
//!
//! Read from the origin towards the collector, a propagation that honors
//! export rules climbs customer edges, crosses at most one peer edge, and
//! descends provider edges: the role word must match customer* peer?
//! provider*. Unlabeled edges could be anything, so a path is flagged
//! only when no assignment of the unknown edges could satisfy that
//! pattern. That is exactly the existence of two known labels i < j
//! (i nearer the origin) with role_i in {peer, provider} and role_j in
//! {customer, peer}; the flagged pair is the violation witness.

use std::collections::BTreeSet;

use crate::bgp::{AsPath, BgpUpdate, Community, PeerId, Prefix, UpdateKind};
use crate::dictionary::{Dictionary, Meaning, RelationshipRole};

/// Label for one edge of a collapsed path, collector side first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeLabel {
    /// Edge index: edge i connects hop i to hop i+1.
    pub position: usize,
    /// None when untagged or conflicted.
    pub role: Option<RelationshipRole>,
    /// Community that produced the role, when exactly one view won.
    pub evidence: Option<Community>,
    /// Two communities disagreed about this edge.
    pub conflict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeLabeling {
    /// One label per edge of the collapsed path, collector to origin.
    pub labels: Vec<EdgeLabel>,
    /// Some tagging ASN appeared at several hops; its collector-nearest
    /// occurrence was used.
    pub ambiguous: bool,
}

impl EdgeLabeling {
    pub fn known_labels(&self) -> usize {
        self.labels.iter().filter(|l| l.role.is_some()).count()
    }

    pub fn has_conflicts(&self) -> bool {
        self.labels.iter().any(|l| l.conflict)
    }
}

/// Derives edge labels for a path from its relationship communities.
/// Communities are applied in ascending order; a community whose ASN is
/// absent from the path, or present only as the origin, labels nothing.
pub fn label_edges(
    path: &AsPath,
    communities: &BTreeSet<Community>,
    dictionary: &Dictionary,
) -> EdgeLabeling {
    let collapsed: Vec<u32> = path.collapsed().hops().to_vec();
    let edges = collapsed.len().saturating_sub(1);
    let mut labels: Vec<EdgeLabel> = (0..edges)
        .map(|position| EdgeLabel {
            position,
            role: None,
            evidence: None,
            conflict: false,
        })
        .collect();
    let mut ambiguous = false;

    for community in communities {
        let roles: Vec<RelationshipRole> = dictionary
            .lookup(*community)
            .into_iter()
            .filter_map(|meaning| match meaning {
                Meaning::Relationship(role) => Some(role),
                _ => None,
            })
            .collect();
        if roles.is_empty() {
            continue;
        }
        let tagger = u32::from(community.asn);
        let mut occurrences = collapsed.iter().enumerate().filter(|(_, hop)| **hop == tagger);
        let Some((first, _)) = occurrences.next() else {
            continue;
        };
        if occurrences.next().is_some() {
            ambiguous = true;
        }
        if first + 1 == collapsed.len() {
            continue; // origin tags have no origin-side edge
        }
        let label = &mut labels[first];
        for role in roles {
            if label.conflict {
                break;
            }
            match label.role {
                None => {
                    label.role = Some(role);
                    label.evidence = Some(*community);
                }
                Some(existing) if existing == role => {}
                Some(_) => {
                    label.role = None;
                    label.evidence = None;
                    label.conflict = true;
                }
            }
        }
    }
    EdgeLabeling { labels, ambiguous }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValleyCheck {
    pub violating: bool,
    /// Lexicographically smallest offending pair of edge indices, in the
    /// same origin-first orientation as the input.
    pub witness: Option<(usize, usize)>,
}

/// Decides whether known labels rule out every valley-free reading.
/// `roles` is ordered origin-side first; None is an unlabeled edge.
pub fn check_valley_free(roles: &[Option<RelationshipRole>]) -> ValleyCheck {
    for (i, role_i) in roles.iter().enumerate() {
        let downhillish = matches!(
            role_i,
            Some(RelationshipRole::Peer) | Some(RelationshipRole::Provider)
        );
        if !downhillish {
            continue;
        }
        for (j, role_j) in roles.iter().enumerate().skip(i + 1) {
            if matches!(
                role_j,
                Some(RelationshipRole::Customer) | Some(RelationshipRole::Peer)
            ) {
                return ValleyCheck {
                    violating: true,
                    witness: Some((i, j)),
                };
            }
        }
    }
    ValleyCheck {
        violating: false,
        witness: None,
    }
}

/// Full analysis of one path: labeling plus the violation check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValleyVerdict {
    pub collapsed_path: Vec<u32>,
    pub labeling: EdgeLabeling,
    pub violating: bool,
    /// Origin-oriented edge indices of the witness pair.
    pub witness: Option<(usize, usize)>,
}

pub fn analyze_path(
    path: &AsPath,
    communities: &BTreeSet<Community>,
    dictionary: &Dictionary,
) -> ValleyVerdict {
    let labeling = label_edges(path, communities, dictionary);
    // The checker wants origin-side-first roles; labels run the other way.
    let roles: Vec<Option<RelationshipRole>> =
        labeling.labels.iter().rev().map(|l| l.role).collect();
    let check = check_valley_free(&roles);
    ValleyVerdict {
        collapsed_path: path.collapsed().hops().to_vec(),
        labeling,
        violating: check.violating,
        witness: check.witness,
    }
}

/// One announcement whose path cannot be valley-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValleyViolation {
    pub timestamp: i64,
    pub peer: PeerId,
    pub prefix: Prefix,
    pub verdict: ValleyVerdict,
}

impl ValleyViolation {
    pub fn to_json(&self) -> serde_json::Value {
        let labels: Vec<serde_json::Value> = self
            .verdict
            .labeling
            .labels
            .iter()
            .map(|l| {
                serde_json::json!({
                    "position": l.position,
                    "role": l.role.map(|r| r.to_string()),
                    "evidence": l.evidence.map(|c| c.to_string()),
                    "conflict": l.conflict,
                })
            })
            .collect();
        serde_json::json!({
            "ts": self.timestamp,
            "peer_asn": self.peer.asn,
            "peer_addr": self.peer.addr,
            "prefix": self.prefix.to_string(),
            "path": self.verdict.collapsed_path,
            "labels": labels,
            "witness": self.verdict.witness.map(|(i, j)| vec![i, j]),
            "ambiguous": self.verdict.labeling.ambiguous,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValleyStats {
    /// Announcements analyzed.
    pub paths_checked: u64,
    /// Paths with at least one known edge label.
    pub paths_labeled: u64,
    /// Paths with no known label at all.
    pub paths_zero_labeled: u64,
    pub violating_paths: u64,
    pub ambiguous_paths: u64,
    pub conflicted_paths: u64,
}

impl ValleyStats {
    /// Violating share of paths that had evidence to judge.
    pub fn fraction_of_labeled(&self) -> f64 {
        if self.paths_labeled == 0 {
            0.0
        } else {
            self.violating_paths as f64 / self.paths_labeled as f64
        }
    }

    /// Violating share of everything checked, zero-labeled included.
    pub fn fraction_of_checked(&self) -> f64 {
        if self.paths_checked == 0 {
            0.0
        } else {
            self.violating_paths as f64 / self.paths_checked as f64
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "paths_checked": self.paths_checked,
            "paths_labeled": self.paths_labeled,
            "paths_zero_labeled": self.paths_zero_labeled,
            "violating_paths": self.violating_paths,
            "ambiguous_paths": self.ambiguous_paths,
            "conflicted_paths": self.conflicted_paths,
            "violation_fraction_labeled": self.fraction_of_labeled(),
            "violation_fraction_checked": self.fraction_of_checked(),
        })
    }
}

/// Streaming per-announcement analysis. Holds only counters; violations
/// are returned to the caller as they happen.
#[derive(Debug, Clone, Default)]
pub struct ValleyAnalyzer {
    stats: ValleyStats,
}

impl ValleyAnalyzer {
    pub fn new() -> Self {
        ValleyAnalyzer::default()
    }

    pub fn observe(
        &mut self,
        dictionary: &Dictionary,
        update: &BgpUpdate,
    ) -> Option<ValleyViolation> {
        if update.kind != UpdateKind::Announcement {
            return None;
        }
        let path = update.path.as_ref()?;
        let verdict = analyze_path(path, &update.communities, dictionary);
        self.stats.paths_checked += 1;
        if verdict.labeling.known_labels() > 0 {
            self.stats.paths_labeled += 1;
        } else {
            self.stats.paths_zero_labeled += 1;
        }
        if verdict.labeling.ambiguous {
            self.stats.ambiguous_paths += 1;
        }
        if verdict.labeling.has_conflicts() {
            self.stats.conflicted_paths += 1;
        }
        if verdict.violating {
            self.stats.violating_paths += 1;
            Some(ValleyViolation {
                timestamp: update.timestamp,
                peer: update.peer.clone(),
                prefix: update.prefix.clone(),
                verdict,
            })
        } else {
            None
        }
    }

    pub fn stats(&self) -> ValleyStats {
        self.stats
    }
}

/// Straight grammar match: customer* peer? provider*.
fn matches_export_pattern(word: &[RelationshipRole]) -> bool {
    let mut idx = 0;
    while idx < word.len() && word[idx] == RelationshipRole::Customer {
        idx += 1;
    }
    if idx < word.len() && word[idx] == RelationshipRole::Peer {
        idx += 1;
    }
    while idx < word.len() && word[idx] == RelationshipRole::Provider {
        idx += 1;
    }
    idx == word.len()
}

/// Brute force: does any assignment of the unknown edges make the word
/// match the export pattern?
fn some_completion_matches(word: &[Option<RelationshipRole>]) -> bool {
    const ROLES: [RelationshipRole; 3] = [
        RelationshipRole::Customer,
        RelationshipRole::Peer,
        RelationshipRole::Provider,
    ];
    let unknowns: Vec<usize> = word
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_none().then_some(i))
        .collect();
    let mut completed: Vec<RelationshipRole> = word
        .iter()
        .map(|r| r.unwrap_or(RelationshipRole::Customer))
        .collect();
    let combos = 3usize.checked_pow(unknowns.len() as u32).expect("small word");
    for mut counter in 0..combos {
        for &pos in &unknowns {
            completed[pos] = ROLES[counter % 3];
            counter /= 3;
        }
        if matches_export_pattern(&completed) {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValleySelfCheck {
    pub words_tested: u64,
    pub mismatches: u64,
}

/// Exhaustively compares [`check_valley_free`] against completion
/// enumeration for every role word up to `max_len` edges. Cost grows as
/// 4^len * 3^unknowns; lengths beyond ~8 get slow.
pub fn valley_selfcheck(max_len: usize) -> ValleySelfCheck {
    const ALPHABET: [Option<RelationshipRole>; 4] = [
        None,
        Some(RelationshipRole::Customer),
        Some(RelationshipRole::Peer),
        Some(RelationshipRole::Provider),
    ];
    let mut words_tested = 0u64;
    let mut mismatches = 0u64;
    for len in 0..=max_len {
        let combos = 4usize.checked_pow(len as u32).expect("small word");
        let mut word = vec![None; len];
        for mut counter in 0..combos {
            for slot in word.iter_mut() {
                *slot = ALPHABET[counter % 4];
                counter /= 4;
            }
            words_tested += 1;
            let flagged = check_valley_free(&word).violating;
            let satisfiable = some_completion_matches(&word);
            if flagged == satisfiable {
                mismatches += 1;
            }
        }
    }
    ValleySelfCheck {
        words_tested,
        mismatches,
    }
}
