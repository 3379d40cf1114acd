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

//! Command-line front end.
//!
//! `run` drives the whole pipeline; the remaining subcommands expose one
//! analysis each over the same input formats. Exit codes: 0 clean,
//! 1 runtime failure (unreadable files, bad data files), 2 usage or
//! configuration error.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use tagwatch::baseline::Baseline;
use tagwatch::blackhole;
use tagwatch::detector::Threshold;
use tagwatch::dictionary::{Category, Dictionary, GeoLocation, GeoScope};
use tagwatch::ingest::{DropReason, StreamCursor};
use tagwatch::outage::{self, ActivityTracker};
use tagwatch::pipeline::{self, PipelineError, RunConfig};
use tagwatch::synthgen::{self, Scenario};
use tagwatch::valleyfree::{self, ValleyAnalyzer};

#[derive(Parser)]
#[command(name = "tagwatch", version, about = "Watches BGP community tags for operational events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a baseline from the stream head, then detect and investigate
    Run(RunArgs),
    /// Produce a synthetic stream, dictionary, and ground-truth file
    Generate(GenerateArgs),
    /// Print per-category statistics for a dictionary
    DictStats(DictStatsArgs),
    /// Extract blackhole request events from a stream
    BlackholeScan(BlackholeScanArgs),
    /// Check announced paths against the valley-free rule
    ValleyCheck(ValleyCheckArgs),
    /// Export announcement/withdrawal counts per time bin
    Timeseries(TimeseriesArgs),
}

#[derive(Debug)]
enum CliError {
    /// Bad configuration or usage; exit 2, nothing written.
    Config(String),
    /// Failure while doing the work; exit 1.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(err: io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(err: PipelineError) -> Self {
        match &err {
            PipelineError::Config(_) => CliError::Config(err.to_string()),
            PipelineError::Engine(e) => match e {
                tagwatch::pipeline::EngineError::Config(_) => CliError::Config(err.to_string()),
                _ => CliError::Runtime(err.to_string()),
            },
            PipelineError::Io(_) => CliError::Runtime(err.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Generate(args) => cmd_generate(args),
        Command::DictStats(args) => cmd_dict_stats(args),
        Command::BlackholeScan(args) => cmd_blackhole_scan(args),
        Command::ValleyCheck(args) => cmd_valley_check(args),
        Command::Timeseries(args) => cmd_timeseries(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("tagwatch: {err}");
            err.exit_code()
        }
    }
}

fn open_input(spec: &str) -> Result<Box<dyn BufRead>, CliError> {
    if spec == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let file = File::open(spec)
            .map_err(|e| CliError::Runtime(format!("cannot open input {spec}: {e}")))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn load_dictionary(path: &Path) -> Result<Dictionary, CliError> {
    Dictionary::load_path(path)
        .map_err(|e| CliError::Runtime(format!("dictionary {}: {e}", path.display())))
}

fn print_json(value: &serde_json::Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------- run

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file; command-line flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Community dictionary CSV
    #[arg(long, value_name = "FILE")]
    dictionary: Option<PathBuf>,
    /// NDJSON update stream, or - for standard input
    #[arg(long, value_name = "FILE")]
    input: Option<String>,
    /// Directory the report files are written into
    #[arg(long, value_name = "DIR")]
    outdir: Option<PathBuf>,
    /// Deviation bin width in seconds
    #[arg(long, value_name = "SECONDS")]
    bin_width: Option<i64>,
    /// Baseline learning window in seconds
    #[arg(long, value_name = "SECONDS")]
    init_window: Option<i64>,
    /// Announcements required before a route enters the baseline
    #[arg(long, value_name = "N")]
    min_observations: Option<u64>,
    /// Absolute signal threshold in deviating routes per bin
    #[arg(long, value_name = "N", conflicts_with = "relative_threshold")]
    threshold: Option<u64>,
    /// Relative signal threshold as a fraction of the baseline size
    #[arg(long, value_name = "FRACTION")]
    relative_threshold: Option<f64>,
    /// Tolerated out-of-order arrival in seconds
    #[arg(long, value_name = "SECONDS")]
    reorder_slack: Option<i64>,
    /// Also treat collapsed AS-path changes as deviations
    #[arg(long)]
    detect_path_changes: bool,
    /// Concentration an outage verdict requires
    #[arg(long, value_name = "FRACTION")]
    min_concentration: Option<f64>,
    /// Attributed deviations an outage verdict requires
    #[arg(long, value_name = "N")]
    min_attributed: Option<u64>,
    /// Blackhole series period in seconds
    #[arg(long, value_name = "SECONDS")]
    blackhole_period: Option<i64>,
    /// Start detection immediately from this exported baseline
    #[arg(long, value_name = "FILE")]
    baseline: Option<PathBuf>,
    /// Also write the learned baseline to baseline.ndjson
    #[arg(long)]
    export_baseline: bool,
    /// Skip outage investigation
    #[arg(long)]
    no_outages: bool,
    /// Skip blackhole extraction
    #[arg(long)]
    no_blackholes: bool,
    /// Skip valley-free checking
    #[arg(long)]
    no_valleys: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    dictionary: Option<PathBuf>,
    input: Option<String>,
    outdir: Option<PathBuf>,
    bin_width: Option<i64>,
    init_window: Option<i64>,
    min_observations: Option<u64>,
    threshold: Option<ThresholdSpec>,
    reorder_slack: Option<i64>,
    detect_path_changes: Option<bool>,
    outage: Option<OutageSection>,
    blackhole_period: Option<i64>,
    investigate: Option<InvestigateSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ThresholdSpec {
    absolute: Option<u64>,
    relative: Option<f64>,
}

impl ThresholdSpec {
    fn resolve(&self) -> Result<Threshold, CliError> {
        match (self.absolute, self.relative) {
            (Some(k), None) => Ok(Threshold::Absolute(k)),
            (None, Some(f)) => Ok(Threshold::Relative(f)),
            _ => Err(CliError::Config(
                "threshold must set exactly one of \"absolute\" or \"relative\"".into(),
            )),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutageSection {
    min_concentration: Option<f64>,
    min_attributed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InvestigateSection {
    outages: Option<bool>,
    blackholes: Option<bool>,
    valleys: Option<bool>,
}

struct ResolvedRun {
    dictionary: PathBuf,
    input: String,
    outdir: PathBuf,
    run: RunConfig,
    warm_baseline: Option<PathBuf>,
}

fn resolve_run(args: &RunArgs) -> Result<ResolvedRun, CliError> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Runtime(format!("config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let dictionary = args
        .dictionary
        .clone()
        .or(file.dictionary)
        .ok_or_else(|| {
            CliError::Config("a dictionary is required: pass --dictionary or set \"dictionary\" in the config".into())
        })?;
    let input = args.input.clone().or(file.input).unwrap_or_else(|| "-".into());
    let outdir = args.outdir.clone().or(file.outdir).ok_or_else(|| {
        CliError::Config("an output directory is required: pass --outdir or set \"outdir\" in the config".into())
    })?;

    let mut run = RunConfig::default();
    let engine = &mut run.engine;
    if let Some(v) = args.bin_width.or(file.bin_width) {
        engine.bin_width = v;
    }
    if let Some(v) = args.init_window.or(file.init_window) {
        engine.init_window = v;
    }
    if let Some(v) = args.min_observations.or(file.min_observations) {
        engine.min_observations = v;
    }
    engine.threshold = if let Some(k) = args.threshold {
        Threshold::Absolute(k)
    } else if let Some(f) = args.relative_threshold {
        Threshold::Relative(f)
    } else if let Some(spec) = &file.threshold {
        spec.resolve()?
    } else {
        engine.threshold
    };
    if let Some(v) = args.reorder_slack.or(file.reorder_slack) {
        engine.reorder_slack = v;
    }
    engine.detect_path_changes =
        args.detect_path_changes || file.detect_path_changes.unwrap_or(false);

    let outage_section = file.outage.unwrap_or_default();
    if let Some(v) = args.min_concentration.or(outage_section.min_concentration) {
        run.outage.min_concentration = v;
    }
    if let Some(v) = args.min_attributed.or(outage_section.min_attributed) {
        run.outage.min_attributed = v;
    }
    if let Some(v) = args.blackhole_period.or(file.blackhole_period) {
        run.blackhole_period = v;
    }

    let investigate = file.investigate.unwrap_or_default();
    run.investigate_outages = !args.no_outages && investigate.outages.unwrap_or(true);
    run.investigate_blackholes = !args.no_blackholes && investigate.blackholes.unwrap_or(true);
    run.investigate_valleys = !args.no_valleys && investigate.valleys.unwrap_or(true);
    run.export_baseline = args.export_baseline;

    Ok(ResolvedRun {
        dictionary,
        input,
        outdir,
        run,
        warm_baseline: args.baseline.clone(),
    })
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let resolved = resolve_run(&args)?;
    // Config problems must surface before anything touches the disk.
    resolved.run.validate()?;
    let dictionary = Arc::new(load_dictionary(&resolved.dictionary)?);
    let warm = match &resolved.warm_baseline {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::Runtime(format!("baseline {}: {e}", path.display())))?;
            Some(Baseline::import(BufReader::new(file)).map_err(|e| {
                CliError::Runtime(format!("baseline {}: {e}", path.display()))
            })?)
        }
        None => None,
    };
    let input = open_input(&resolved.input)?;
    let summary =
        pipeline::run_pipeline(input, &dictionary, &resolved.run, &resolved.outdir, warm)?;
    print_json(&summary.to_json())
}

// ----------------------------------------------------------- generate

#[derive(Args)]
struct GenerateArgs {
    /// Scenario JSON, or - for standard input
    #[arg(long, value_name = "FILE")]
    scenario: String,
    /// Directory for stream.ndjson, dictionary.csv, ground_truth.json
    #[arg(long, value_name = "DIR")]
    outdir: PathBuf,
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let text = if args.scenario == "-" {
        let mut buf = String::new();
        io::stdin().read_to_string(&mut buf)?;
        buf
    } else {
        fs::read_to_string(&args.scenario)
            .map_err(|e| CliError::Runtime(format!("scenario {}: {e}", args.scenario)))?
    };
    let scenario = Scenario::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let output = synthgen::generate(&scenario).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(&args.outdir)?;
    fs::write(args.outdir.join("stream.ndjson"), &output.stream)?;
    fs::write(args.outdir.join("dictionary.csv"), &output.dictionary)?;
    let mut gt = BufWriter::new(File::create(args.outdir.join("ground_truth.json"))?);
    serde_json::to_writer_pretty(&mut gt, &output.ground_truth)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    gt.write_all(b"\n")?;
    gt.flush()?;
    print_json(&serde_json::json!({
        "outdir": args.outdir,
        "records": output.ground_truth["records_total"],
    }))
}

// ---------------------------------------------------------- dict-stats

#[derive(Args)]
struct DictStatsArgs {
    /// Community dictionary CSV
    #[arg(long, value_name = "FILE")]
    dictionary: PathBuf,
}

fn cmd_dict_stats(args: DictStatsArgs) -> Result<(), CliError> {
    let dictionary = load_dictionary(&args.dictionary)?;
    let stats = dictionary.stats();
    let mut categories = serde_json::Map::new();
    for category in Category::ALL {
        categories.insert(
            category.to_string(),
            serde_json::json!({
                "count": stats.count(category),
                "fraction": stats.fraction(category),
            }),
        );
    }
    print_json(&serde_json::json!({
        "total": stats.total(),
        "categories": categories,
    }))
}

// ------------------------------------------------------ blackhole-scan

#[derive(Args)]
struct BlackholeScanArgs {
    /// Community dictionary CSV
    #[arg(long, value_name = "FILE")]
    dictionary: PathBuf,
    /// NDJSON update stream, or - for standard input
    #[arg(long, value_name = "FILE", default_value = "-")]
    input: String,
    /// Directory for events, series, and histogram files
    #[arg(long, value_name = "DIR")]
    outdir: PathBuf,
    /// Series period in seconds
    #[arg(long, value_name = "SECONDS", default_value_t = 86_400)]
    period: i64,
    /// Check coverage against this exported baseline
    #[arg(long, value_name = "FILE")]
    baseline: Option<PathBuf>,
    /// Tolerated out-of-order arrival in seconds
    #[arg(long, value_name = "SECONDS", default_value_t = 30)]
    reorder_slack: i64,
}

fn cmd_blackhole_scan(args: BlackholeScanArgs) -> Result<(), CliError> {
    if args.period <= 0 {
        return Err(CliError::Config(format!(
            "period must be positive, got {}",
            args.period
        )));
    }
    if args.reorder_slack < 0 {
        return Err(CliError::Config(format!(
            "reorder slack must be non-negative, got {}",
            args.reorder_slack
        )));
    }
    let dictionary = load_dictionary(&args.dictionary)?;
    let baseline = match &args.baseline {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::Runtime(format!("baseline {}: {e}", path.display())))?;
            Some(Baseline::import(BufReader::new(file)).map_err(|e| {
                CliError::Runtime(format!("baseline {}: {e}", path.display()))
            })?)
        }
        None => None,
    };
    let mut input = open_input(&args.input)?;
    fs::create_dir_all(&args.outdir)?;

    let mut events_out =
        BufWriter::new(File::create(args.outdir.join("blackhole_events.ndjson"))?);
    let mut cursor = StreamCursor::new(args.reorder_slack);
    let mut events = Vec::new();
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
        if let Some(event) =
            blackhole::classify_blackhole(&update, &dictionary, baseline.as_ref())
        {
            writeln!(events_out, "{}", event.to_json())?;
            events.push(event);
        }
    }
    events_out.flush()?;

    let series = blackhole::blackhole_series(&events, args.period)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let series_file = File::create(args.outdir.join("blackhole_series.csv"))?;
    blackhole::write_blackhole_series_csv(&series, BufWriter::new(series_file))?;
    let histogram = blackhole::prefix_length_histogram(&events);
    let histogram_file = File::create(args.outdir.join("blackhole_histogram.csv"))?;
    blackhole::write_histogram_csv(&histogram, BufWriter::new(histogram_file))?;

    let distinct: std::collections::BTreeSet<_> = events.iter().map(|e| &e.prefix).collect();
    print_json(&serde_json::json!({
        "consumed": cursor.consumed(),
        "accepted": cursor.accepted(),
        "dropped_malformed": cursor.dropped(DropReason::Malformed),
        "dropped_stale": cursor.dropped(DropReason::Stale),
        "events": events.len(),
        "distinct_prefixes": distinct.len(),
    }))
}

// ------------------------------------------------------- valley-check

#[derive(Args)]
struct ValleyCheckArgs {
    /// Verify the checker against the enumeration oracle and exit
    #[arg(long, conflicts_with_all = ["dictionary", "input", "out"])]
    self_test: bool,
    /// Longest label word the self-test enumerates
    #[arg(long, value_name = "N", default_value_t = 6)]
    max_len: usize,
    /// Community dictionary CSV
    #[arg(long, value_name = "FILE", required_unless_present = "self_test")]
    dictionary: Option<PathBuf>,
    /// NDJSON update stream, or - for standard input
    #[arg(long, value_name = "FILE", default_value = "-")]
    input: String,
    /// Write violation records (NDJSON) here
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Tolerated out-of-order arrival in seconds
    #[arg(long, value_name = "SECONDS", default_value_t = 30)]
    reorder_slack: i64,
}

fn cmd_valley_check(args: ValleyCheckArgs) -> Result<(), CliError> {
    if args.self_test {
        // 4^n words, each with up to 3^n completions: past 8 this stops
        // being an interactive command.
        if args.max_len > 8 {
            return Err(CliError::Config(format!(
                "self-test max length is 8, got {}",
                args.max_len
            )));
        }
        let report = valleyfree::valley_selfcheck(args.max_len);
        print_json(&serde_json::json!({
            "words_tested": report.words_tested,
            "mismatches": report.mismatches,
        }))?;
        if report.mismatches > 0 {
            return Err(CliError::Runtime(format!(
                "self-test found {} mismatches",
                report.mismatches
            )));
        }
        return Ok(());
    }

    if args.reorder_slack < 0 {
        return Err(CliError::Config(format!(
            "reorder slack must be non-negative, got {}",
            args.reorder_slack
        )));
    }
    let dictionary = load_dictionary(args.dictionary.as_deref().expect("clap enforces"))?;
    let mut input = open_input(&args.input)?;
    let mut out: Option<BufWriter<File>> = match &args.out {
        Some(path) => Some(BufWriter::new(File::create(path)?)),
        None => None,
    };
    let mut cursor = StreamCursor::new(args.reorder_slack);
    let mut analyzer = ValleyAnalyzer::new();
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
        if let Some(violation) = analyzer.observe(&dictionary, &update) {
            if let Some(w) = &mut out {
                writeln!(w, "{}", violation.to_json())?;
            }
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    print_json(&analyzer.stats().to_json())
}

// -------------------------------------------------------- timeseries

#[derive(Args)]
struct TimeseriesArgs {
    /// Community dictionary CSV
    #[arg(long, value_name = "FILE")]
    dictionary: PathBuf,
    /// NDJSON update stream, or - for standard input
    #[arg(long, value_name = "FILE", default_value = "-")]
    input: String,
    /// Bin width in seconds
    #[arg(long, value_name = "SECONDS", default_value_t = 60)]
    bin_width: i64,
    /// Restrict to routes tagged with this location scope
    #[arg(long, value_name = "SCOPE", requires = "location")]
    scope: Option<String>,
    /// Restrict to routes tagged with this location label
    #[arg(long, value_name = "LABEL", requires = "scope")]
    location: Option<String>,
    /// Output CSV, or - for standard output
    #[arg(long, value_name = "FILE", default_value = "-")]
    out: String,
    /// Tolerated out-of-order arrival in seconds
    #[arg(long, value_name = "SECONDS", default_value_t = 30)]
    reorder_slack: i64,
}

fn cmd_timeseries(args: TimeseriesArgs) -> Result<(), CliError> {
    if args.reorder_slack < 0 {
        return Err(CliError::Config(format!(
            "reorder slack must be non-negative, got {}",
            args.reorder_slack
        )));
    }
    let filter = match (&args.scope, &args.location) {
        (Some(scope), Some(label)) => {
            let scope = GeoScope::from_str(scope).map_err(|_| {
                CliError::Config(format!(
                    "unknown scope {scope}: expected ixp, facility, city, or country"
                ))
            })?;
            Some(GeoLocation::new(scope, label.clone()))
        }
        _ => None,
    };
    let dictionary = load_dictionary(&args.dictionary)?;
    let mut tracker = ActivityTracker::new(args.bin_width)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut input = open_input(&args.input)?;
    let mut cursor = StreamCursor::new(args.reorder_slack);
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
        tracker.observe(&dictionary, &update);
    }
    let series = tracker.series(filter.as_ref());
    if args.out == "-" {
        outage::write_series_csv(&series, io::stdout().lock())?;
    } else {
        let file = File::create(&args.out)?;
        outage::write_series_csv(&series, BufWriter::new(file))?;
    }
    Ok(())
}
