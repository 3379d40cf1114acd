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

//! The streaming engine and the end-to-end run driver.
//!
//! [`StreamEngine`] sequences the phases: admission through the reorder
//! cursor, baseline learning over the initialization window, then
//! detection. The window is anchored at the first accepted timestamp t0
//! and spans [t0 - slack, t0 - slack + init_window); updates landing in
//! the closing gray zone [window_end, window_end + slack) are held until
//! a timestamp proves the window over, then replayed in arrival order.
//!
//! [`run_pipeline`] wires the engine to the investigators and writes
//! every output file. Outputs are created up front, so an empty input
//! still produces a complete, empty result set.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::baseline::{Baseline, BaselineBuilder, BaselineError};
use crate::bgp::BgpUpdate;
use crate::blackhole::{self, BlackholeEvent};
use crate::detector::{Detector, DetectorConfig, DetectorError, DetectorStats, Signal, Threshold};
use crate::dictionary::{Dictionary, GeoLocation};
use crate::ingest::{DropReason, StreamCursor};
use crate::outage::{investigate_outage, ActivityTracker, OutageConfig, OutageReport};
use crate::valleyfree::ValleyAnalyzer;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub bin_width: i64,
    pub init_window: i64,
    pub min_observations: u64,
    pub threshold: Threshold,
    pub reorder_slack: i64,
    pub detect_path_changes: bool,
    /// Keep a pristine copy of the learned baseline at promotion, for
    /// export. Costs one extra baseline-sized allocation.
    pub snapshot_learned: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            bin_width: crate::detector::DEFAULT_BIN_WIDTH,
            init_window: crate::baseline::DEFAULT_INIT_WINDOW,
            min_observations: crate::baseline::DEFAULT_MIN_OBSERVATIONS,
            threshold: Threshold::Absolute(crate::detector::DEFAULT_THRESHOLD),
            reorder_slack: crate::ingest::DEFAULT_REORDER_SLACK,
            detect_path_changes: false,
            snapshot_learned: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("detector rejected an update: {0}")]
    Detector(#[from] DetectorError),
    #[error("baseline rejected an update: {0}")]
    Baseline(#[from] BaselineError),
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let cfg = |msg: String| Err(EngineError::Config(msg));
        if self.bin_width <= 0 {
            return cfg(format!("bin width must be positive, got {}", self.bin_width));
        }
        if self.init_window <= 0 {
            return cfg(format!("init window must be positive, got {}", self.init_window));
        }
        if self.min_observations == 0 {
            return cfg("min observations must be at least 1".into());
        }
        if self.reorder_slack < 0 {
            return cfg(format!("reorder slack must be non-negative, got {}", self.reorder_slack));
        }
        match self.threshold {
            Threshold::Absolute(k) if k == 0 => {
                return cfg("threshold must be at least 1".into());
            }
            Threshold::Relative(f) if !(f > 0.0 && f <= 1.0) => {
                return cfg(format!("relative threshold must be in (0, 1], got {f}"));
            }
            _ => {}
        }
        Ok(())
    }

    fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            bin_width: self.bin_width,
            threshold: self.threshold,
            slack: self.reorder_slack,
            detect_path_changes: self.detect_path_changes,
        }
    }
}

enum EngineState {
    /// No update accepted yet; the window is unanchored.
    Idle,
    Learning {
        builder: BaselineBuilder,
        held: Vec<BgpUpdate>,
    },
    Detecting {
        detector: Detector,
    },
}

/// What one fed line produced.
#[derive(Debug, Default)]
pub struct FeedOutcome {
    /// The update, if the line was admitted.
    pub accepted: Option<BgpUpdate>,
    /// True exactly once, on the feed that finalized the baseline.
    pub finalized: bool,
    pub signals: Vec<Signal>,
}

pub struct StreamEngine {
    dictionary: Arc<Dictionary>,
    cfg: EngineConfig,
    cursor: StreamCursor,
    state: EngineState,
    /// Baseline size the moment detection began. The working baseline
    /// evolves afterwards (bin closure re-admits deviations), so this is
    /// the only record of what learning itself produced.
    promoted_size: Option<usize>,
    /// Pristine learned baseline, kept only when the config asks.
    learned: Option<Baseline>,
}

impl StreamEngine {
    /// Cold start: learn the baseline from the stream head.
    pub fn new(dictionary: Arc<Dictionary>, cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let cursor = StreamCursor::new(cfg.reorder_slack);
        Ok(StreamEngine {
            dictionary,
            cfg,
            cursor,
            state: EngineState::Idle,
            promoted_size: None,
            learned: None,
        })
    }

    /// Warm start: detection begins with the first record.
    pub fn with_baseline(
        dictionary: Arc<Dictionary>,
        cfg: EngineConfig,
        baseline: Baseline,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let cursor = StreamCursor::new(cfg.reorder_slack);
        let learned = cfg.snapshot_learned.then(|| baseline.clone());
        let detector = Detector::new(baseline, cfg.detector_config())?;
        let promoted_size = Some(detector.baseline().len());
        Ok(StreamEngine {
            dictionary,
            cfg,
            cursor,
            state: EngineState::Detecting { detector },
            promoted_size,
            learned,
        })
    }

    pub fn cursor(&self) -> &StreamCursor {
        &self.cursor
    }

    /// The working baseline, once detection has begun. Bin closure
    /// re-admits deviations, so this drifts from the learned snapshot.
    pub fn baseline(&self) -> Option<&Baseline> {
        match &self.state {
            EngineState::Detecting { detector } => Some(detector.baseline()),
            _ => None,
        }
    }

    /// How many routes the baseline held when detection began.
    pub fn learned_baseline_size(&self) -> Option<usize> {
        self.promoted_size
    }

    /// The pristine learned baseline; present only after promotion and
    /// only if the config set `snapshot_learned`.
    pub fn learned_baseline(&self) -> Option<&Baseline> {
        self.learned.as_ref()
    }

    pub fn detector_stats(&self) -> Option<DetectorStats> {
        match &self.state {
            EngineState::Detecting { detector } => Some(detector.stats()),
            _ => None,
        }
    }

    /// Learning window as [start, end), once anchored.
    pub fn window(&self) -> Option<(i64, i64)> {
        match &self.state {
            EngineState::Learning { builder, .. } => {
                Some((builder.window_start(), builder.window_end()))
            }
            _ => None,
        }
    }

    /// Counts a line that could not be decoded as text at all.
    pub fn note_malformed(&mut self) {
        self.cursor.note_malformed();
    }

    pub fn feed_line(&mut self, line: &str) -> Result<FeedOutcome, EngineError> {
        let Some(update) = self.cursor.offer_line(line) else {
            return Ok(FeedOutcome::default());
        };
        let mut outcome = FeedOutcome::default();
        match &mut self.state {
            EngineState::Idle => {
                let builder = BaselineBuilder::new(
                    update.timestamp - self.cfg.reorder_slack,
                    self.cfg.init_window,
                    self.cfg.min_observations,
                )?;
                self.state = EngineState::Learning {
                    builder,
                    held: Vec::new(),
                };
                let EngineState::Learning { builder, .. } = &mut self.state else {
                    unreachable!()
                };
                builder.observe(&update)?;
            }
            EngineState::Learning { builder, held } => {
                let window_end = builder.window_end();
                if update.timestamp >= window_end + self.cfg.reorder_slack {
                    // No future admitted record can predate window_end, so
                    // the window is provably over.
                    let state = std::mem::replace(&mut self.state, EngineState::Idle);
                    let EngineState::Learning { builder, held } = state else {
                        unreachable!()
                    };
                    let baseline = builder.finalize();
                    if self.cfg.snapshot_learned {
                        self.learned = Some(baseline.clone());
                    }
                    let mut detector = Detector::new(baseline, self.cfg.detector_config())?;
                    self.promoted_size = Some(detector.baseline().len());
                    for held_update in &held {
                        outcome.signals.extend(detector.offer(&self.dictionary, held_update)?);
                    }
                    outcome.signals.extend(detector.offer(&self.dictionary, &update)?);
                    self.state = EngineState::Detecting { detector };
                    outcome.finalized = true;
                } else if update.timestamp < window_end {
                    builder.observe(&update)?;
                } else {
                    // Gray zone: past the window but a straggler inside it
                    // could still arrive. Hold for replay.
                    held.push(update.clone());
                }
            }
            EngineState::Detecting { detector } => {
                outcome.signals = detector.offer(&self.dictionary, &update)?;
            }
        }
        outcome.accepted = Some(update);
        Ok(outcome)
    }

    /// Flushes at end of stream: finalizes a still-learning baseline,
    /// replays held updates, and closes all open bins.
    pub fn finish(&mut self) -> Result<FeedOutcome, EngineError> {
        let mut outcome = FeedOutcome::default();
        let state = std::mem::replace(&mut self.state, EngineState::Idle);
        match state {
            EngineState::Idle => {
                // An empty stream still yields an (empty) baseline.
                let detector = Detector::new(Baseline::empty(), self.cfg.detector_config())?;
                self.promoted_size = Some(0);
                if self.cfg.snapshot_learned {
                    self.learned = Some(Baseline::empty());
                }
                self.state = EngineState::Detecting { detector };
                outcome.finalized = true;
            }
            EngineState::Learning { builder, held } => {
                let baseline = builder.finalize();
                if self.cfg.snapshot_learned {
                    self.learned = Some(baseline.clone());
                }
                let mut detector = Detector::new(baseline, self.cfg.detector_config())?;
                self.promoted_size = Some(detector.baseline().len());
                for held_update in &held {
                    outcome.signals.extend(detector.offer(&self.dictionary, held_update)?);
                }
                outcome.signals.extend(detector.finish());
                self.state = EngineState::Detecting { detector };
                outcome.finalized = true;
            }
            EngineState::Detecting { mut detector } => {
                outcome.signals = detector.finish();
                self.state = EngineState::Detecting { detector };
            }
        }
        Ok(outcome)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub outage: OutageConfig,
    pub investigate_outages: bool,
    pub investigate_blackholes: bool,
    pub investigate_valleys: bool,
    /// Aggregation period for the blackhole series, in seconds.
    pub blackhole_period: i64,
    /// Also write the learned baseline to baseline.ndjson in the outdir.
    pub export_baseline: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            engine: EngineConfig::default(),
            outage: OutageConfig::default(),
            investigate_outages: true,
            investigate_blackholes: true,
            investigate_valleys: true,
            blackhole_period: 86_400,
            export_baseline: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.engine.validate().map_err(|e| match e {
            EngineError::Config(msg) => PipelineError::Config(msg),
            other => PipelineError::Config(other.to_string()),
        })?;
        self.outage
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.blackhole_period <= 0 {
            return Err(PipelineError::Config(format!(
                "blackhole period must be positive, got {}",
                self.blackhole_period
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Aggregate counters for one run; `to_json` is the summary.json body.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub consumed: u64,
    pub accepted: u64,
    pub dropped_malformed: u64,
    pub dropped_stale: u64,
    pub baseline_size: u64,
    pub signals: u64,
    pub outage_verdicts: u64,
    pub blackhole_events: u64,
    pub valley_violations: u64,
    pub detector: DetectorStats,
    pub valley: crate::valleyfree::ValleyStats,
}

impl RunSummary {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "records": {
                "consumed": self.consumed,
                "accepted": self.accepted,
                "dropped_malformed": self.dropped_malformed,
                "dropped_stale": self.dropped_stale,
            },
            "baseline_size": self.baseline_size,
            "detector": {
                "bins_closed": self.detector.bins_closed,
                "deviating_keys": self.detector.deviating_keys_total,
                "signals": self.signals,
            },
            "outage_verdicts": self.outage_verdicts,
            "blackhole_events": self.blackhole_events,
            "valley": self.valley.to_json(),
        })
    }
}

fn sanitize_for_filename(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else {
            out.push('_');
        }
    }
    out
}

struct NdjsonWriter {
    inner: BufWriter<File>,
}

impl NdjsonWriter {
    fn create(path: &Path) -> io::Result<Self> {
        Ok(NdjsonWriter {
            inner: BufWriter::new(File::create(path)?),
        })
    }

    fn write(&mut self, value: &serde_json::Value) -> io::Result<()> {
        writeln!(self.inner, "{value}")
    }

    fn finish(mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn outage_report_json(signal: &Signal, report: &OutageReport) -> serde_json::Value {
    serde_json::json!({
        "bin": signal.bin,
        "bin_start": signal.bin_start,
        "bin_end": signal.bin_end,
        "scope": report.location.scope.to_string(),
        "location": report.location.label,
        "attributed": report.attributed,
        "total": report.total,
        "concentration": report.concentration,
        "outage": report.outage,
    })
}

/// Runs the full pipeline over an NDJSON stream, writing all outputs
/// into `outdir` (created if absent). Returns the run's counters.
///
/// Files written: signals.ndjson, outages.ndjson, blackhole_events.ndjson,
/// blackhole_series.csv, blackhole_histogram.csv, valley_verdicts.ndjson,
/// timeseries_all.csv, timeseries_<scope>_<label>.csv per outage verdict,
/// and summary.json.
pub fn run_pipeline<R: BufRead>(
    mut input: R,
    dictionary: &Arc<Dictionary>,
    cfg: &RunConfig,
    outdir: &Path,
    warm_baseline: Option<Baseline>,
) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(outdir)?;

    let mut engine_cfg = cfg.engine.clone();
    engine_cfg.snapshot_learned |= cfg.export_baseline;
    let mut engine = match warm_baseline {
        Some(baseline) => {
            StreamEngine::with_baseline(Arc::clone(dictionary), engine_cfg, baseline)?
        }
        None => StreamEngine::new(Arc::clone(dictionary), engine_cfg)?,
    };

    let mut signals_out = NdjsonWriter::create(&outdir.join("signals.ndjson"))?;
    let mut outages_out = NdjsonWriter::create(&outdir.join("outages.ndjson"))?;
    let mut blackholes_out = NdjsonWriter::create(&outdir.join("blackhole_events.ndjson"))?;
    let mut valleys_out = NdjsonWriter::create(&outdir.join("valley_verdicts.ndjson"))?;

    let mut tracker = ActivityTracker::new(cfg.engine.bin_width)
        .expect("bin width validated");
    let mut valley = ValleyAnalyzer::new();
    let mut blackhole_events: Vec<BlackholeEvent> = Vec::new();
    let mut signal_count = 0u64;
    let mut verdict_count = 0u64;
    let mut valley_violation_count = 0u64;
    let mut verdict_locations: BTreeSet<GeoLocation> = BTreeSet::new();

    let emit_signals = |signals: &[Signal],
                            signals_out: &mut NdjsonWriter,
                            outages_out: &mut NdjsonWriter,
                            verdict_count: &mut u64,
                            verdict_locations: &mut BTreeSet<GeoLocation>|
     -> io::Result<u64> {
        let mut emitted = 0u64;
        for signal in signals {
            signals_out.write(&signal.to_json())?;
            emitted += 1;
            if cfg.investigate_outages {
                for report in investigate_outage(signal, &cfg.outage) {
                    outages_out.write(&outage_report_json(signal, &report))?;
                    if report.outage {
                        *verdict_count += 1;
                        verdict_locations.insert(report.location.clone());
                    }
                }
            }
        }
        Ok(emitted)
    };

    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = input.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        let outcome = match std::str::from_utf8(&buf) {
            Ok(text) => engine.feed_line(text)?,
            Err(_) => {
                engine.note_malformed();
                continue;
            }
        };
        signal_count += emit_signals(
            &outcome.signals,
            &mut signals_out,
            &mut outages_out,
            &mut verdict_count,
            &mut verdict_locations,
        )?;
        if let Some(update) = &outcome.accepted {
            tracker.observe(dictionary, update);
            if cfg.investigate_blackholes {
                if let Some(event) = blackhole::classify_blackhole(update, dictionary, engine.baseline())
                {
                    blackholes_out.write(&event.to_json())?;
                    blackhole_events.push(event);
                }
            }
            if cfg.investigate_valleys {
                if let Some(violation) = valley.observe(dictionary, update) {
                    valleys_out.write(&violation.to_json())?;
                    valley_violation_count += 1;
                }
            }
        }
    }
    let outcome = engine.finish()?;
    signal_count += emit_signals(
        &outcome.signals,
        &mut signals_out,
        &mut outages_out,
        &mut verdict_count,
        &mut verdict_locations,
    )?;

    signals_out.finish()?;
    outages_out.finish()?;
    blackholes_out.finish()?;
    valleys_out.finish()?;

    // Series and histogram need the full event list, so they land at end.
    let series = blackhole::blackhole_series(&blackhole_events, cfg.blackhole_period)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let series_file = File::create(outdir.join("blackhole_series.csv"))?;
    blackhole::write_blackhole_series_csv(&series, BufWriter::new(series_file))?;
    let histogram = blackhole::prefix_length_histogram(&blackhole_events);
    let histogram_file = File::create(outdir.join("blackhole_histogram.csv"))?;
    blackhole::write_histogram_csv(&histogram, BufWriter::new(histogram_file))?;

    if cfg.export_baseline {
        let baseline = engine
            .learned_baseline()
            .expect("snapshot requested and stream finished");
        let mut out = BufWriter::new(File::create(outdir.join("baseline.ndjson"))?);
        baseline.export(&mut out)?;
        out.flush()?;
    }

    let all_file = File::create(outdir.join("timeseries_all.csv"))?;
    crate::outage::write_series_csv(&tracker.series(None), BufWriter::new(all_file))?;
    for location in &verdict_locations {
        let name = format!(
            "timeseries_{}_{}.csv",
            sanitize_for_filename(&location.scope.to_string()),
            sanitize_for_filename(&location.label)
        );
        let file = File::create(outdir.join(name))?;
        crate::outage::write_series_csv(&tracker.series(Some(location)), BufWriter::new(file))?;
    }

    let summary = RunSummary {
        consumed: engine.cursor().consumed(),
        accepted: engine.cursor().accepted(),
        dropped_malformed: engine.cursor().dropped(DropReason::Malformed),
        dropped_stale: engine.cursor().dropped(DropReason::Stale),
        baseline_size: engine.learned_baseline_size().unwrap_or(0) as u64,
        signals: signal_count,
        outage_verdicts: verdict_count,
        blackhole_events: blackhole_events.len() as u64,
        valley_violations: valley_violation_count,
        detector: engine.detector_stats().unwrap_or_default(),
        valley: valley.stats(),
    };
    let mut summary_file = BufWriter::new(File::create(outdir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut summary_file, &summary.to_json())
        .map_err(|e| PipelineError::Io(io::Error::other(e)))?;
    summary_file.write_all(b"\n")?;
    summary_file.flush()?;

    Ok(summary)
}

/// Learns a baseline from the stream head and returns it untouched by
/// detection, for warm-restart export. Records past the window are
/// ignored; reading stops once one proves the window over.
pub fn learn_baseline<R: BufRead>(
    mut input: R,
    cfg: &EngineConfig,
) -> Result<Baseline, PipelineError> {
    cfg.validate()?;
    let mut cursor = StreamCursor::new(cfg.reorder_slack);
    let mut builder: Option<BaselineBuilder> = None;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = input.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        let Ok(text) = std::str::from_utf8(&buf) else {
            cursor.note_malformed();
            continue;
        };
        let Some(update) = cursor.offer_line(text) else {
            continue;
        };
        match &mut builder {
            None => {
                let mut b = BaselineBuilder::new(
                    update.timestamp - cfg.reorder_slack,
                    cfg.init_window,
                    cfg.min_observations,
                )
                .map_err(EngineError::from)?;
                b.observe(&update).map_err(EngineError::from)?;
                builder = Some(b);
            }
            Some(b) => {
                if update.timestamp >= b.window_end() + cfg.reorder_slack {
                    break;
                }
                if update.timestamp < b.window_end() {
                    b.observe(&update).map_err(EngineError::from)?;
                }
                // Gray-zone records are post-window: skip.
            }
        }
    }
    Ok(builder.map_or_else(Baseline::empty, BaselineBuilder::finalize))
}

/// Output file names a run produces, fixed plus per-location extras.
pub fn expected_outputs(outdir: &Path) -> Vec<PathBuf> {
    [
        "signals.ndjson",
        "outages.ndjson",
        "blackhole_events.ndjson",
        "blackhole_series.csv",
        "blackhole_histogram.csv",
        "valley_verdicts.ndjson",
        "timeseries_all.csv",
        "summary.json",
    ]
    .iter()
    .map(|name| outdir.join(name))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{self, Injection, InjectionKind, Scenario};
    use crate::dictionary::GeoScope;

    fn outage_scenario() -> Scenario {
        Scenario {
            seed: 11,
            baseline_routes: 50,
            injections: vec![Injection {
                at: 3600,
                kind: InjectionKind::IxpOutage {
                    location: "TestIX".to_string(),
                    scope: GeoScope::Ixp,
                    routes: 20,
                },
            }],
            ..Scenario::default()
        }
    }

    fn engine_for(dictionary: Dictionary) -> StreamEngine {
        StreamEngine::new(Arc::new(dictionary), EngineConfig::default()).unwrap()
    }

    #[test]
    fn engine_learns_then_detects_the_synthetic_outage() {
        let output = synthgen::generate(&outage_scenario()).unwrap();
        let dictionary = Dictionary::load(output.dictionary.as_bytes()).unwrap();
        let mut engine = engine_for(dictionary);
        let mut signals = Vec::new();
        let mut finalized_at_line = None;
        for (idx, line) in output.stream.lines().enumerate() {
            let outcome = engine.feed_line(line).unwrap();
            if outcome.finalized {
                finalized_at_line = Some(idx);
            }
            signals.extend(outcome.signals);
        }
        signals.extend(engine.finish().unwrap().signals);
        // Learning flips exactly when the first injection record arrives.
        assert_eq!(finalized_at_line, Some(100));
        assert_eq!(engine.learned_baseline_size(), Some(50));
        // Closing the outage bin re-admitted the 20 withdrawals.
        assert_eq!(engine.baseline().unwrap().len(), 30);
        assert_eq!(signals.len(), 1);
        assert_eq!(signals[0].bin, 60);
        assert_eq!(signals[0].count, 20);
    }

    #[test]
    fn empty_stream_finishes_with_empty_baseline() {
        let mut engine = engine_for(Dictionary::from_entries(vec![]));
        let outcome = engine.finish().unwrap();
        assert!(outcome.finalized);
        assert!(outcome.signals.is_empty());
        assert_eq!(engine.baseline().unwrap().len(), 0);
    }

    #[test]
    fn warm_start_skips_learning() {
        let output = synthgen::generate(&outage_scenario()).unwrap();
        let dictionary =
            Arc::new(Dictionary::load(output.dictionary.as_bytes()).unwrap());
        let baseline =
            learn_baseline(output.stream.as_bytes(), &EngineConfig::default()).unwrap();
        assert_eq!(baseline.len(), 50);

        // Feed only the post-learning tail to a warm engine.
        let mut engine = StreamEngine::with_baseline(
            Arc::clone(&dictionary),
            EngineConfig::default(),
            baseline,
        )
        .unwrap();
        let mut signals = Vec::new();
        for line in output.stream.lines() {
            let ts = serde_json::from_str::<serde_json::Value>(line).unwrap()["ts"]
                .as_i64()
                .unwrap();
            if ts < 3600 {
                continue;
            }
            signals.extend(engine.feed_line(line).unwrap().signals);
        }
        signals.extend(engine.finish().unwrap().signals);
        assert_eq!(signals.len(), 1);
        assert_eq!(signals[0].count, 20);
    }

    #[test]
    fn gray_zone_updates_are_held_and_replayed() {
        // Window [–30, 3570): ts 3575 is gray, ts 3600 proves closure.
        let dictionary = Arc::new(Dictionary::from_entries(vec![]));
        let mut engine =
            StreamEngine::new(Arc::clone(&dictionary), EngineConfig::default()).unwrap();
        let line = |ts: i64, kind: &str, prefix: &str| {
            if kind == "A" {
                format!(
                    r#"{{"ts":{ts},"peer_asn":1,"peer_addr":"p","type":"A","prefix":"{prefix}","as_path":[1,2],"communities":[]}}"#
                )
            } else {
                format!(r#"{{"ts":{ts},"peer_asn":1,"peer_addr":"p","type":"W","prefix":"{prefix}"}}"#)
            }
        };
        engine.feed_line(&line(0, "A", "10.0.0.0/24")).unwrap();
        engine.feed_line(&line(5, "A", "10.0.0.0/24")).unwrap();
        // Gray zone: held, not an error, engine still learning.
        let outcome = engine.feed_line(&line(3575, "W", "10.0.0.0/24")).unwrap();
        assert!(outcome.accepted.is_some());
        assert!(engine.baseline().is_none());
        // This record finalizes and replays the held withdrawal.
        let outcome = engine.feed_line(&line(3600, "W", "10.0.0.0/24")).unwrap();
        assert!(outcome.finalized);
        let outcome = engine.finish().unwrap();
        // One deviation bin from the held + live withdrawal, coalesced.
        assert_eq!(outcome.signals.len(), 0); // threshold 10 not met
        let stats = engine.detector_stats().unwrap();
        assert_eq!(stats.deviating_keys_total, 2); // bins 59 and 60
    }

    #[test]
    fn run_pipeline_writes_all_outputs() {
        let output = synthgen::generate(&outage_scenario()).unwrap();
        let dictionary =
            Arc::new(Dictionary::load(output.dictionary.as_bytes()).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let summary = run_pipeline(
            output.stream.as_bytes(),
            &dictionary,
            &RunConfig::default(),
            dir.path(),
            None,
        )
        .unwrap();
        assert_eq!(summary.baseline_size, 50);
        assert_eq!(summary.signals, 1);
        assert_eq!(summary.outage_verdicts, 1);
        assert_eq!(summary.dropped_malformed, 0);
        for path in expected_outputs(dir.path()) {
            assert!(path.exists(), "{path:?} missing");
        }
        // The verdict location gets its own filtered series.
        assert!(dir.path().join("timeseries_ixp_testix.csv").exists());
        let signals_text = fs::read_to_string(dir.path().join("signals.ndjson")).unwrap();
        assert_eq!(signals_text.lines().count(), 1);
        let outages_text = fs::read_to_string(dir.path().join("outages.ndjson")).unwrap();
        let verdict: serde_json::Value =
            serde_json::from_str(outages_text.lines().next().unwrap()).unwrap();
        assert_eq!(verdict["location"], "TestIX");
        assert_eq!(verdict["outage"], true);
    }

    #[test]
    fn empty_input_still_creates_every_file() {
        let dictionary = Arc::new(Dictionary::from_entries(vec![]));
        let dir = tempfile::tempdir().unwrap();
        let summary = run_pipeline(
            &b""[..],
            &dictionary,
            &RunConfig::default(),
            dir.path(),
            None,
        )
        .unwrap();
        assert_eq!(summary.consumed, 0);
        for path in expected_outputs(dir.path()) {
            assert!(path.exists(), "{path:?} missing");
        }
        let text = fs::read_to_string(dir.path().join("timeseries_all.csv")).unwrap();
        assert_eq!(text, "bin_start,announcements,withdrawals\n");
    }

    #[test]
    fn malformed_lines_are_counted_not_fatal() {
        let output = synthgen::generate(&outage_scenario()).unwrap();
        let dictionary =
            Arc::new(Dictionary::load(output.dictionary.as_bytes()).unwrap());
        let mut corrupted = String::new();
        for (idx, line) in output.stream.lines().enumerate() {
            if idx % 10 == 3 {
                corrupted.push_str("{ totally broken\n");
            }
            corrupted.push_str(line);
            corrupted.push('\n');
        }
        let dir = tempfile::tempdir().unwrap();
        let summary = run_pipeline(
            corrupted.as_bytes(),
            &dictionary,
            &RunConfig::default(),
            dir.path(),
            None,
        )
        .unwrap();
        assert_eq!(summary.dropped_malformed, 12);
        assert_eq!(summary.accepted, 120);
        assert_eq!(summary.signals, 1);
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let output = synthgen::generate(&outage_scenario()).unwrap();
        let dictionary =
            Arc::new(Dictionary::load(output.dictionary.as_bytes()).unwrap());
        let mut blobs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            run_pipeline(
                output.stream.as_bytes(),
                &dictionary,
                &RunConfig::default(),
                dir.path(),
                None,
            )
            .unwrap();
            let mut blob = Vec::new();
            let mut names: Vec<PathBuf> = fs::read_dir(dir.path())
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            names.sort();
            for path in names {
                blob.extend_from_slice(path.file_name().unwrap().to_string_lossy().as_bytes());
                blob.extend_from_slice(&fs::read(&path).unwrap());
            }
            blobs.push(blob);
        }
        assert_eq!(blobs[0], blobs[1]);
    }

    #[test]
    fn invalid_run_config_is_rejected_before_io() {
        let dictionary = Arc::new(Dictionary::from_entries(vec![]));
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.engine.bin_width = 0;
        let err = run_pipeline(&b""[..], &dictionary, &cfg, dir.path(), None).unwrap_err();
        assert!(matches!(err, PipelineError::Config(_)));
        // Nothing was created.
        assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
    }
}
