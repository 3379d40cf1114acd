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

//! Core BGP types: community tags, prefixes, AS paths, update records,
//! and time binning.

use std::collections::BTreeSet;
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use thiserror::Error;

/// A plain 32-bit BGP community tag, two 16-bit halves written `asn:value`.
///
/// Only the classic form is represented. Extended and large communities are
/// rejected at parse time with [`CommunityParseError::UnsupportedForm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Community {
    pub asn: u16,
    pub value: u16,
}

impl Community {
    pub fn new(asn: u16, value: u16) -> Self {
        Community { asn, value }
    }
}

impl fmt::Display for Community {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.asn, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommunityParseError {
    /// Input does not have the decimal `asn:value` shape.
    #[error("malformed community {0:?}: expected decimal \"asn:value\"")]
    Malformed(String),
    /// A half is decimal but does not fit in 16 bits.
    #[error("community {input:?}: {half} half exceeds 16 bits")]
    OutOfRange { input: String, half: &'static str },
    /// More than one colon: an extended or large community encoding.
    #[error("unsupported community form {0:?}: only \"asn:value\" tags are recognized")]
    UnsupportedForm(String),
}

fn parse_community_half(
    text: &str,
    half: &'static str,
    input: &str,
) -> Result<u16, CommunityParseError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CommunityParseError::Malformed(input.to_string()));
    }
    match text.parse::<u64>() {
        Ok(v) if v <= u64::from(u16::MAX) => Ok(v as u16),
        // All-digit input that does not fit in u16 (or even u64).
        _ => Err(CommunityParseError::OutOfRange {
            input: input.to_string(),
            half,
        }),
    }
}

impl FromStr for Community {
    type Err = CommunityParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let (first, second) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(CommunityParseError::Malformed(s.to_string())),
        };
        if parts.next().is_some() {
            return Err(CommunityParseError::UnsupportedForm(s.to_string()));
        }
        Ok(Community {
            asn: parse_community_half(first, "asn", s)?,
            value: parse_community_half(second, "value", s)?,
        })
    }
}

/// An IP prefix in canonical form: all bits beyond the length are zero.
///
/// Non-canonical input is rejected at construction, never silently masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    addr: IpAddr,
    length: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrefixParseError {
    #[error("malformed prefix {0:?}: expected \"address/length\"")]
    Malformed(String),
    #[error("prefix {0:?}: invalid address")]
    BadAddress(String),
    #[error("prefix {input:?}: length {length} exceeds {max}")]
    LengthOutOfRange { input: String, length: u8, max: u8 },
    #[error("prefix {0:?}: host bits set beyond the prefix length")]
    HostBits(String),
}

fn max_length(addr: &IpAddr) -> u8 {
    match addr {
        IpAddr::V4(_) => 32,
        IpAddr::V6(_) => 128,
    }
}

impl Prefix {
    pub fn new(addr: IpAddr, length: u8) -> Result<Self, PrefixParseError> {
        let max = max_length(&addr);
        if length > max {
            return Err(PrefixParseError::LengthOutOfRange {
                input: format!("{addr}/{length}"),
                length,
                max,
            });
        }
        let canonical = match addr {
            IpAddr::V4(a) => {
                let host_mask = if length >= 32 { 0 } else { u32::MAX >> length };
                u32::from(a) & host_mask == 0
            }
            IpAddr::V6(a) => {
                let host_mask = if length >= 128 { 0 } else { u128::MAX >> length };
                u128::from(a) & host_mask == 0
            }
        };
        if !canonical {
            return Err(PrefixParseError::HostBits(format!("{addr}/{length}")));
        }
        Ok(Prefix { addr, length })
    }

    pub fn address(&self) -> IpAddr {
        self.addr
    }

    pub fn length(&self) -> u8 {
        self.length
    }

    pub fn is_ipv4(&self) -> bool {
        self.addr.is_ipv4()
    }

    /// True when every address under `other` also falls under `self`:
    /// same family, `self` no longer than `other`, and the first
    /// `self.length` bits agree. Reflexive. Never true across families.
    pub fn covers(&self, other: &Prefix) -> bool {
        if self.length > other.length {
            return false;
        }
        match (self.addr, other.addr) {
            (IpAddr::V4(a), IpAddr::V4(b)) => {
                let mask = if self.length == 0 {
                    0
                } else {
                    u32::MAX << (32 - self.length)
                };
                (u32::from(a) ^ u32::from(b)) & mask == 0
            }
            (IpAddr::V6(a), IpAddr::V6(b)) => {
                let mask = if self.length == 0 {
                    0
                } else {
                    u128::MAX << (128 - self.length)
                };
                (u128::from(a) ^ u128::from(b)) & mask == 0
            }
            _ => false,
        }
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.length)
    }
}

impl FromStr for Prefix {
    type Err = PrefixParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr_text, len_text) = s
            .split_once('/')
            .ok_or_else(|| PrefixParseError::Malformed(s.to_string()))?;
        let addr: IpAddr = addr_text
            .parse()
            .map_err(|_| PrefixParseError::BadAddress(s.to_string()))?;
        if len_text.is_empty() || !len_text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(PrefixParseError::Malformed(s.to_string()));
        }
        let length: u8 = len_text.parse().map_err(|_| PrefixParseError::LengthOutOfRange {
            input: s.to_string(),
            length: u8::MAX,
            max: max_length(&addr),
        })?;
        Prefix::new(addr, length).map_err(|e| match e {
            // Rebuild with the original input text for error messages.
            PrefixParseError::HostBits(_) => PrefixParseError::HostBits(s.to_string()),
            PrefixParseError::LengthOutOfRange { length, max, .. } => {
                PrefixParseError::LengthOutOfRange {
                    input: s.to_string(),
                    length,
                    max,
                }
            }
            other => other,
        })
    }
}

/// An AS path ordered collector-peer first, origin last.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AsPath(Vec<u32>);

impl AsPath {
    pub fn new(hops: Vec<u32>) -> Self {
        AsPath(hops)
    }

    pub fn hops(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The originating AS, i.e. the last hop.
    pub fn origin(&self) -> Option<u32> {
        self.0.last().copied()
    }

    /// The path with adjacent duplicate hops merged. Removes prepending
    /// without reordering; non-adjacent repeats are kept. Idempotent.
    pub fn collapsed(&self) -> AsPath {
        let mut hops = self.0.clone();
        hops.dedup();
        AsPath(hops)
    }
}

impl fmt::Display for AsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for hop in &self.0 {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{hop}")?;
            first = false;
        }
        Ok(())
    }
}

/// Identity of the collector peer that observed an update.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId {
    pub asn: u32,
    pub addr: String,
}

impl PeerId {
    pub fn new(asn: u32, addr: impl Into<String>) -> Self {
        PeerId {
            asn,
            addr: addr.into(),
        }
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AS{}/{}", self.asn, self.addr)
    }
}

/// The unit of monitoring: one prefix as seen by one collector peer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RouteKey {
    pub peer: PeerId,
    pub prefix: Prefix,
}

impl RouteKey {
    pub fn new(peer: PeerId, prefix: Prefix) -> Self {
        RouteKey { peer, prefix }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Announcement,
    Withdrawal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UpdateError {
    #[error("announcement must carry a non-empty AS path")]
    EmptyPath,
}

/// One update record. Announcements carry a path and a community set;
/// withdrawals carry neither.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BgpUpdate {
    /// Unix seconds.
    pub timestamp: i64,
    pub peer: PeerId,
    pub kind: UpdateKind,
    pub prefix: Prefix,
    pub path: Option<AsPath>,
    pub communities: BTreeSet<Community>,
}

impl BgpUpdate {
    pub fn announcement(
        timestamp: i64,
        peer: PeerId,
        prefix: Prefix,
        path: AsPath,
        communities: BTreeSet<Community>,
    ) -> Result<Self, UpdateError> {
        if path.is_empty() {
            return Err(UpdateError::EmptyPath);
        }
        Ok(BgpUpdate {
            timestamp,
            peer,
            kind: UpdateKind::Announcement,
            prefix,
            path: Some(path),
            communities,
        })
    }

    pub fn withdrawal(timestamp: i64, peer: PeerId, prefix: Prefix) -> Self {
        BgpUpdate {
            timestamp,
            peer,
            kind: UpdateKind::Withdrawal,
            prefix,
            path: None,
            communities: BTreeSet::new(),
        }
    }

    pub fn is_announcement(&self) -> bool {
        self.kind == UpdateKind::Announcement
    }

    pub fn key(&self) -> RouteKey {
        RouteKey {
            peer: self.peer.clone(),
            prefix: self.prefix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("bin width must be positive, got {0}")]
pub struct InvalidBinWidth(pub i64);

/// Maps a timestamp to its fixed-width bin: floor(timestamp / bin_width).
/// Monotone in the timestamp for a fixed width.
pub fn bin_index(timestamp: i64, bin_width: i64) -> Result<i64, InvalidBinWidth> {
    if bin_width <= 0 {
        return Err(InvalidBinWidth(bin_width));
    }
    Ok(timestamp.div_euclid(bin_width))
}
