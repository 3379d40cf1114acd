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

//! tagwatch interprets BGP community tags against an operator dictionary to
//! detect routing incidents from a collector's update feed.
//!
//! The pipeline learns a baseline of stably tagged routes from an
//! initialization window, counts per-bin deviations from that baseline
//! (withdrawals, community changes, optional path changes), raises signals
//! when enough routes deviate together, and hands signals to investigators
//! that localize outages by tagged location, classify blackholing requests,
//! and check paths against the valley-free routing rule.

pub mod baseline;
pub mod bgp;
pub mod blackhole;
pub mod detector;
pub mod dictionary;
pub mod ingest;
pub mod outage;
pub mod pipeline;
pub mod synthgen;
pub mod valleyfree;

pub use bgp::{
    bin_index, AsPath, BgpUpdate, Community, CommunityParseError, InvalidBinWidth, PeerId, Prefix,
    PrefixParseError, RouteKey, UpdateKind,
};
