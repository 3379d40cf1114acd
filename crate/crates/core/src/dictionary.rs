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

//! Community dictionaries: what operators mean by their tags.
//!
//! A dictionary maps (asn, value) community tags to meanings in four
//! categories: geolocation, relationship, blackhole, and routing action.
//! Entries match either an exact value or an inclusive value range.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bgp::Community;

/// Granularity of a geolocation tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeoScope {
    Ixp,
    Facility,
    City,
    Country,
}

impl fmt::Display for GeoScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeoScope::Ixp => "ixp",
            GeoScope::Facility => "facility",
            GeoScope::City => "city",
            GeoScope::Country => "country",
        })
    }
}

impl FromStr for GeoScope {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ixp" => Ok(GeoScope::Ixp),
            "facility" => Ok(GeoScope::Facility),
            "city" => Ok(GeoScope::City),
            "country" => Ok(GeoScope::Country),
            _ => Err(()),
        }
    }
}

/// Where a route was learned, as tagged by the operator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GeoLocation {
    pub scope: GeoScope,
    pub label: String,
}

impl GeoLocation {
    pub fn new(scope: GeoScope, label: impl Into<String>) -> Self {
        GeoLocation {
            scope,
            label: label.into(),
        }
    }
}

impl fmt::Display for GeoLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.scope, self.label)
    }
}

/// Business relationship of the neighbor a route was learned from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationshipRole {
    Customer,
    Peer,
    Provider,
}

impl fmt::Display for RelationshipRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationshipRole::Customer => "customer",
            RelationshipRole::Peer => "peer",
            RelationshipRole::Provider => "provider",
        })
    }
}

impl FromStr for RelationshipRole {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "customer" => Ok(RelationshipRole::Customer),
            "peer" => Ok(RelationshipRole::Peer),
            "provider" => Ok(RelationshipRole::Provider),
            _ => Err(()),
        }
    }
}

/// Traffic-engineering action requested by a tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    SelectiveAdvertisement,
    LocalPreference,
    Prepend,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::SelectiveAdvertisement => "selective-advertisement",
            ActionKind::LocalPreference => "local-preference",
            ActionKind::Prepend => "prepend",
        })
    }
}

impl FromStr for ActionKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "selective-advertisement" => Ok(ActionKind::SelectiveAdvertisement),
            "local-preference" => Ok(ActionKind::LocalPreference),
            "prepend" => Ok(ActionKind::Prepend),
            _ => Err(()),
        }
    }
}

/// Decoded meaning of a community tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Meaning {
    Geolocation(GeoLocation),
    Relationship(RelationshipRole),
    Blackhole,
    Action(ActionKind),
}

impl Meaning {
    pub fn category(&self) -> Category {
        match self {
            Meaning::Geolocation(_) => Category::Geolocation,
            Meaning::Relationship(_) => Category::Relationship,
            Meaning::Blackhole => Category::Blackhole,
            Meaning::Action(_) => Category::Action,
        }
    }

    pub fn as_geolocation(&self) -> Option<&GeoLocation> {
        match self {
            Meaning::Geolocation(loc) => Some(loc),
            _ => None,
        }
    }

    pub fn as_relationship(&self) -> Option<RelationshipRole> {
        match self {
            Meaning::Relationship(role) => Some(*role),
            _ => None,
        }
    }
}

impl fmt::Display for Meaning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Meaning::Geolocation(loc) => write!(f, "geolocation:{loc}"),
            Meaning::Relationship(role) => write!(f, "relationship:{role}"),
            Meaning::Blackhole => f.write_str("blackhole"),
            Meaning::Action(kind) => write!(f, "action:{kind}"),
        }
    }
}

/// Top-level meaning category, the unit of conflict checking and stats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Geolocation,
    Relationship,
    Blackhole,
    Action,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Geolocation,
        Category::Relationship,
        Category::Blackhole,
        Category::Action,
    ];

    fn index(self) -> usize {
        match self {
            Category::Geolocation => 0,
            Category::Relationship => 1,
            Category::Blackhole => 2,
            Category::Action => 3,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Geolocation => "geolocation",
            Category::Relationship => "relationship",
            Category::Blackhole => "blackhole",
            Category::Action => "action",
        })
    }
}

/// Community values an entry applies to: one value or an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueSpec {
    lo: u16,
    hi: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("value range lower bound {lo} exceeds upper bound {hi}")]
pub struct InvalidRange {
    pub lo: u16,
    pub hi: u16,
}

impl ValueSpec {
    pub fn exact(value: u16) -> Self {
        ValueSpec { lo: value, hi: value }
    }

    pub fn range(lo: u16, hi: u16) -> Result<Self, InvalidRange> {
        if lo > hi {
            return Err(InvalidRange { lo, hi });
        }
        Ok(ValueSpec { lo, hi })
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, value: u16) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn overlaps(&self, other: &ValueSpec) -> bool {
        self.lo.max(other.lo) <= self.hi.min(other.hi)
    }

    pub fn bounds(&self) -> (u16, u16) {
        (self.lo, self.hi)
    }
}

impl fmt::Display for ValueSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact() {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}-{}", self.lo, self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryEntry {
    pub asn: u16,
    pub spec: ValueSpec,
    pub meaning: Meaning,
    pub description: String,
}

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("failed to read dictionary: {0}")]
    Io(#[from] io::Error),
    #[error("dictionary header must be \"asn,value_spec,category,subtype,location,description\"")]
    Header,
    #[error("dictionary line {line}: {problem}")]
    Syntax { line: u64, problem: String },
    #[error(
        "dictionary lines {first_line} and {second_line}: asn {asn} has overlapping {category} \
         entries with different meanings"
    )]
    Conflict {
        first_line: u64,
        second_line: u64,
        asn: u16,
        category: Category,
    },
}

/// Immutable tag dictionary, indexed by tagging ASN.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    by_asn: BTreeMap<u16, Vec<DictionaryEntry>>,
    len: usize,
}

impl Dictionary {
    /// Builds a dictionary without the load-time overlap validation.
    /// Lookup precedence still resolves exact-vs-range overlaps, so a
    /// dictionary built this way behaves deterministically either way.
    pub fn from_entries(entries: impl IntoIterator<Item = DictionaryEntry>) -> Self {
        let mut by_asn: BTreeMap<u16, Vec<DictionaryEntry>> = BTreeMap::new();
        let mut len = 0;
        for entry in entries {
            by_asn.entry(entry.asn).or_default().push(entry);
            len += 1;
        }
        Dictionary { by_asn, len }
    }

    pub fn load<R: io::Read>(reader: R) -> Result<Self, DictionaryError> {
        let numbered = parse_csv(reader)?;
        check_conflicts(&numbered)?;
        Ok(Dictionary::from_entries(numbered.into_iter().map(|(_, e)| e)))
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, DictionaryError> {
        Dictionary::load(File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = &DictionaryEntry> {
        self.by_asn.values().flatten()
    }

    /// All meanings whose entry matches the tag. Within each category an
    /// exact-value match suppresses range matches of that category.
    pub fn lookup(&self, community: Community) -> BTreeSet<Meaning> {
        let Some(entries) = self.by_asn.get(&community.asn) else {
            return BTreeSet::new();
        };
        let matching: Vec<&DictionaryEntry> = entries
            .iter()
            .filter(|e| e.spec.contains(community.value))
            .collect();
        let exact_categories: BTreeSet<Category> = matching
            .iter()
            .filter(|e| e.spec.is_exact())
            .map(|e| e.meaning.category())
            .collect();
        matching
            .into_iter()
            .filter(|e| e.spec.is_exact() || !exact_categories.contains(&e.meaning.category()))
            .map(|e| e.meaning.clone())
            .collect()
    }

    /// Union of lookups over a whole community set, deduplicated.
    pub fn annotate<'a>(
        &self,
        communities: impl IntoIterator<Item = &'a Community>,
    ) -> BTreeSet<Meaning> {
        let mut meanings = BTreeSet::new();
        for c in communities {
            meanings.extend(self.lookup(*c));
        }
        meanings
    }

    pub fn stats(&self) -> DictionaryStats {
        let mut counts = [0u64; 4];
        for entry in self.entries() {
            counts[entry.meaning.category().index()] += 1;
        }
        DictionaryStats {
            total: self.len as u64,
            counts,
        }
    }
}

/// Per-category entry counts over a dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DictionaryStats {
    total: u64,
    counts: [u64; 4],
}

impl DictionaryStats {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, category: Category) -> u64 {
        self.counts[category.index()]
    }

    /// Share of entries in the category; 0.0 for an empty dictionary.
    pub fn fraction(&self, category: Category) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(category) as f64 / self.total as f64
        }
    }
}

const HEADER: [&str; 6] = [
    "asn",
    "value_spec",
    "category",
    "subtype",
    "location",
    "description",
];

fn parse_csv<R: io::Read>(reader: R) -> Result<Vec<(u64, DictionaryEntry)>, DictionaryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(map_csv_error)?;
    if headers.iter().ne(HEADER) {
        return Err(DictionaryError::Header);
    }

    let mut numbered = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(map_csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() > HEADER.len() {
            return Err(DictionaryError::Syntax {
                line,
                problem: format!("expected at most 6 fields, found {}", record.len()),
            });
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let entry = parse_entry(
            line,
            field(0),
            field(1),
            field(2),
            field(3),
            field(4),
            field(5),
        )?;
        numbered.push((line, entry));
    }
    Ok(numbered)
}

fn map_csv_error(err: csv::Error) -> DictionaryError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(io_err) => DictionaryError::Io(io_err),
        kind => DictionaryError::Syntax {
            line,
            problem: format!("{kind:?}"),
        },
    }
}

fn syntax(line: u64, problem: impl Into<String>) -> DictionaryError {
    DictionaryError::Syntax {
        line,
        problem: problem.into(),
    }
}

fn parse_u16_field(line: u64, name: &str, text: &str) -> Result<u16, DictionaryError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(syntax(line, format!("{name} must be a decimal in 0..=65535, got {text:?}")));
    }
    text.parse::<u64>()
        .ok()
        .filter(|v| *v <= u64::from(u16::MAX))
        .map(|v| v as u16)
        .ok_or_else(|| syntax(line, format!("{name} {text:?} exceeds 16 bits")))
}

fn parse_value_spec(line: u64, text: &str) -> Result<ValueSpec, DictionaryError> {
    match text.split_once('-') {
        None => Ok(ValueSpec::exact(parse_u16_field(line, "value_spec", text)?)),
        Some((lo, hi)) => {
            let lo = parse_u16_field(line, "value_spec low bound", lo)?;
            let hi = parse_u16_field(line, "value_spec high bound", hi)?;
            ValueSpec::range(lo, hi).map_err(|e| syntax(line, e.to_string()))
        }
    }
}

fn parse_entry(
    line: u64,
    asn: &str,
    value_spec: &str,
    category: &str,
    subtype: &str,
    location: &str,
    description: &str,
) -> Result<DictionaryEntry, DictionaryError> {
    let asn = parse_u16_field(line, "asn", asn)?;
    let spec = parse_value_spec(line, value_spec)?;
    let meaning = match category {
        "geolocation" => {
            let scope: GeoScope = subtype
                .parse()
                .map_err(|_| syntax(line, format!("unknown geolocation subtype {subtype:?}")))?;
            if location.is_empty() {
                return Err(syntax(line, "geolocation entries require a location"));
            }
            Meaning::Geolocation(GeoLocation::new(scope, location))
        }
        "relationship" => {
            let role: RelationshipRole = subtype
                .parse()
                .map_err(|_| syntax(line, format!("unknown relationship subtype {subtype:?}")))?;
            require_no_location(line, location)?;
            Meaning::Relationship(role)
        }
        "blackhole" => {
            if !subtype.is_empty() {
                return Err(syntax(line, "blackhole entries take no subtype"));
            }
            require_no_location(line, location)?;
            Meaning::Blackhole
        }
        "action" => {
            let kind: ActionKind = subtype
                .parse()
                .map_err(|_| syntax(line, format!("unknown action subtype {subtype:?}")))?;
            require_no_location(line, location)?;
            Meaning::Action(kind)
        }
        other => return Err(syntax(line, format!("unknown category {other:?}"))),
    };
    Ok(DictionaryEntry {
        asn,
        spec,
        meaning,
        description: description.to_string(),
    })
}

fn require_no_location(line: u64, location: &str) -> Result<(), DictionaryError> {
    if location.is_empty() {
        Ok(())
    } else {
        Err(syntax(line, "location is only valid for geolocation entries"))
    }
}

fn check_conflicts(numbered: &[(u64, DictionaryEntry)]) -> Result<(), DictionaryError> {
    let mut by_asn: BTreeMap<u16, Vec<&(u64, DictionaryEntry)>> = BTreeMap::new();
    for pair in numbered {
        by_asn.entry(pair.1.asn).or_default().push(pair);
    }
    for (asn, pairs) in by_asn {
        for (i, (line_a, a)) in pairs.iter().enumerate() {
            for (line_b, b) in &pairs[i + 1..] {
                if a.meaning.category() == b.meaning.category()
                    && a.spec.overlaps(&b.spec)
                    && a.meaning != b.meaning
                {
                    return Err(DictionaryError::Conflict {
                        first_line: *line_a,
                        second_line: *line_b,
                        asn,
                        category: a.meaning.category(),
                    });
                }
            }
        }
    }
    Ok(())
}
