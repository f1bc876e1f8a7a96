//! Command-line driver: ingest, window, measure, detect, export.
//!
//! Exit status is `0` when no alert-severity finding survives the pattern
//! filter, `2` when at least one does, and `1` on any operational error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::detect::{run_all, DetectError};
use crate::export::{
    export_findings_json, export_overlay_dot, export_timeseries_csv, InputDigest, RunMetadata,
};
use crate::ingest::{
    build_comm_graphs, build_windows, default_origin, load_architecture, load_changes,
    parse_chat_canonical, parse_chat_xmpp_xml, register_unknown_actors, ChangeReport, IngestError,
    IngestReport, Manifest,
};
use crate::metrics::{build_series, classify_edges, CentralitySeries};
use crate::model::{ChangeRecord, CommEvent, CommGraph, Finding, Pattern, Severity, Window};

pub const EXIT_CLEAN: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_ALERT: u8 = 2;

const DEFAULT_WINDOW: Duration = Duration::from_secs(7 * 86_400);

#[derive(Debug, Parser)]
#[command(name = "stsc", version, about = "Detect socio-technical structure clashes in team chat logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline and write every artifact.
    Analyze(RunArgs),
    /// Write architecture overlays only.
    Graph(GraphArgs),
    /// Write the centrality time series only.
    Timeline(RunArgs),
    /// Write findings only; the exit status gates on alerts.
    Check(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChatFormat {
    Canonical,
    Xmpp,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Project manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Chat log; repeat for several files.
    #[arg(long = "chat", required = true)]
    pub chat: Vec<PathBuf>,
    /// Change log (JSON Lines).
    #[arg(long)]
    pub changes: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Window length, e.g. `7d`. Overrides the manifest.
    #[arg(long, value_parser = crate::duration::parse)]
    pub window_length: Option<Duration>,
    /// Window origin (RFC 3339). Overrides the manifest.
    #[arg(long, value_parser = parse_instant)]
    pub origin: Option<DateTime<Utc>>,
    /// Chat format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<ChatFormat>,
    /// Keep only these patterns or families (`conway`, `bcm`, `ownership`).
    #[arg(long = "pattern")]
    pub patterns: Vec<String>,
    /// Add the run timestamp and tool version to findings.json.
    #[arg(long)]
    pub with_run_metadata: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Only this window: a label such as `2006-W41`, a date, or an instant.
    #[arg(long)]
    pub window: Option<String>,
}

fn parse_instant(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("invalid instant {s:?}: {e}"))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", .path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", .path.display())]
    Ingest { path: PathBuf, source: IngestError },
    #[error("{}: {source}", .path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("{0}")]
    Usage(String),
}

/// What goes into `ingest-report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub chat: IngestReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub changes: Option<ChangeReport>,
    pub manifest_warnings: Vec<String>,
    pub windows: Vec<String>,
}

/// Everything derived from the inputs before detection.
pub struct Pipeline {
    pub manifest: Manifest,
    pub events: Vec<CommEvent>,
    pub changes: Vec<ChangeRecord>,
    pub windows: Vec<Window>,
    pub graphs: Vec<CommGraph>,
    pub summary: IngestSummary,
    pub digests: Vec<InputDigest>,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })
}

fn base_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn chat_format(path: &Path, flag: Option<ChatFormat>) -> ChatFormat {
    flag.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("xml") => ChatFormat::Xmpp,
        _ => ChatFormat::Canonical,
    })
}

impl Pipeline {
    pub fn load(args: &RunArgs) -> Result<Self, CliError> {
        let ingest_err = |path: &Path| {
            let path = path.to_owned();
            move |source| CliError::Ingest { path, source }
        };

        let manifest_bytes = read(&args.manifest)?;
        let mut manifest = load_architecture(&manifest_bytes[..]).map_err(ingest_err(&args.manifest))?;
        let mut digests = vec![InputDigest::of("manifest", &base_name(&args.manifest), &manifest_bytes)];
        for w in &manifest.warnings {
            log::warn!("{}: {w}", args.manifest.display());
        }

        let mut events = Vec::new();
        let mut report = IngestReport::default();
        for path in &args.chat {
            let bytes = read(path)?;
            let (mut evs, mut rep) = match chat_format(path, args.format) {
                ChatFormat::Canonical => parse_chat_canonical(&bytes[..]),
                ChatFormat::Xmpp => parse_chat_xmpp_xml(&bytes[..]),
            }
            .map_err(ingest_err(path))?;
            let name = base_name(path);
            rep.warnings = rep.warnings.into_iter().map(|w| format!("{name}: {w}")).collect();
            report.merge(rep);
            events.append(&mut evs);
            digests.push(InputDigest::of("chat", &name, &bytes));
        }
        events.sort_by_key(|e| e.timestamp);

        let added = register_unknown_actors(&mut manifest.model, &events);
        report.actors_auto_registered = added.len();
        for id in &added {
            log::warn!("actor {id:?} is not rostered, registered without roles");
            report
                .warnings
                .push(format!("actor {:?} auto-registered", id.as_str()));
        }

        let (changes, change_report) = match &args.changes {
            Some(path) => {
                let bytes = read(path)?;
                let (recs, mut rep) = load_changes(&bytes[..]).map_err(ingest_err(path))?;
                let name = base_name(path);
                rep.warnings = rep.warnings.into_iter().map(|w| format!("{name}: {w}")).collect();
                digests.push(InputDigest::of("changes", &name, &bytes));
                (recs, Some(rep))
            }
            None => (Vec::new(), None),
        };

        let length = args
            .window_length
            .or(manifest.windowing.length)
            .unwrap_or(DEFAULT_WINDOW);
        let origin = args.origin.or(manifest.windowing.origin).or_else(|| default_origin(&events));
        let windows = match origin {
            Some(origin) => build_windows(&events, origin, length),
            None => Vec::new(),
        };
        if windows.is_empty() {
            log::warn!("no chat events retained, nothing to window");
        }
        let graphs = build_comm_graphs(&events, &windows, &manifest.model);

        let summary = IngestSummary {
            chat: report,
            changes: change_report,
            manifest_warnings: manifest.warnings.clone(),
            windows: windows.iter().map(Window::label).collect(),
        };
        Ok(Self {
            manifest,
            events,
            changes,
            windows,
            graphs,
            summary,
            digests,
        })
    }

    pub fn series(&self) -> CentralitySeries {
        build_series(&self.graphs)
    }

    pub fn findings(&self, series: &CentralitySeries, filter: &PatternFilter) -> Result<Vec<Finding>, CliError> {
        let all = run_all(&self.graphs, series, &self.manifest.model, &self.changes, &self.manifest.detect)?;
        Ok(all.into_iter().filter(|f| filter.keeps(f.pattern)).collect())
    }
}

/// Parsed `--pattern` values. Empty keeps everything.
#[derive(Debug, Clone, Default)]
pub struct PatternFilter(Vec<Pattern>);

impl PatternFilter {
    pub fn parse(values: &[String]) -> Result<Self, CliError> {
        let mut keep = Vec::new();
        for v in values {
            let matched: Vec<_> = Pattern::ALL
                .iter()
                .copied()
                .filter(|p| p.name() == v || p.family() == v)
                .collect();
            if matched.is_empty() {
                return Err(CliError::Usage(format!(
                    "unknown pattern {v:?}; expected conway, bcm, ownership or a full pattern name"
                )));
            }
            keep.extend(matched);
        }
        Ok(Self(keep))
    }

    pub fn keeps(&self, p: Pattern) -> bool {
        self.0.is_empty() || self.0.contains(&p)
    }
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_owned(),
        source,
    })
}

fn exit_for(findings: &[Finding]) -> u8 {
    if findings.iter().any(|f| f.severity == Severity::Alert) {
        EXIT_ALERT
    } else {
        EXIT_CLEAN
    }
}

fn write_findings(dir: &Path, p: &Pipeline, findings: &[Finding], args: &RunArgs) -> Result<(), CliError> {
    let meta = args.with_run_metadata.then(RunMetadata::now);
    write(dir, "findings.json", &export_findings_json(findings, &p.digests, meta))
}

fn write_overlays<'a>(dir: &Path, p: &Pipeline, graphs: impl IntoIterator<Item = &'a CommGraph>) -> Result<usize, CliError> {
    let mut n = 0;
    for g in graphs {
        let dot = export_overlay_dot(g, &p.manifest.model, &classify_edges(g));
        write(dir, &format!("overlay-{}.dot", g.window.label()), &dot)?;
        n += 1;
    }
    Ok(n)
}

pub fn cmd_analyze(args: &RunArgs) -> Result<u8, CliError> {
    let filter = PatternFilter::parse(&args.patterns)?;
    let p = Pipeline::load(args)?;
    let series = p.series();
    let findings = p.findings(&series, &filter)?;
    prepare_out(&args.out)?;
    write_findings(&args.out, &p, &findings, args)?;
    write_overlays(&args.out, &p, &p.graphs)?;
    write(&args.out, "centrality.csv", &export_timeseries_csv(&series))?;
    let mut report = serde_json::to_vec_pretty(&p.summary).expect("summary serializes");
    report.push(b'\n');
    write(&args.out, "ingest-report.json", &report)?;
    log::info!("{} finding(s) over {} window(s)", findings.len(), p.windows.len());
    Ok(exit_for(&findings))
}

fn window_matches(w: &Window, selector: &str) -> bool {
    if w.label() == selector {
        return true;
    }
    if let Ok(t) = parse_instant(selector) {
        return w.contains(t);
    }
    if let Ok(d) = NaiveDate::parse_from_str(selector, "%Y-%m-%d") {
        return w.contains(d.and_time(chrono::NaiveTime::MIN).and_utc());
    }
    false
}

pub fn cmd_graph(args: &GraphArgs) -> Result<u8, CliError> {
    let p = Pipeline::load(&args.run)?;
    let selected: Vec<&CommGraph> = match &args.window {
        Some(sel) => {
            let hits: Vec<_> = p.graphs.iter().filter(|g| window_matches(&g.window, sel)).collect();
            if hits.is_empty() {
                let known = p.summary.windows.join(", ");
                return Err(CliError::Usage(format!("no window matches {sel:?} (windows: {known})")));
            }
            hits
        }
        None => p.graphs.iter().collect(),
    };
    prepare_out(&args.run.out)?;
    write_overlays(&args.run.out, &p, selected)?;
    Ok(EXIT_CLEAN)
}

pub fn cmd_timeline(args: &RunArgs) -> Result<u8, CliError> {
    let p = Pipeline::load(args)?;
    prepare_out(&args.out)?;
    write(&args.out, "centrality.csv", &export_timeseries_csv(&p.series()))?;
    Ok(EXIT_CLEAN)
}

pub fn cmd_check(args: &RunArgs) -> Result<u8, CliError> {
    let filter = PatternFilter::parse(&args.patterns)?;
    let p = Pipeline::load(args)?;
    let findings = p.findings(&p.series(), &filter)?;
    prepare_out(&args.out)?;
    write_findings(&args.out, &p, &findings, args)?;
    Ok(exit_for(&findings))
}

pub fn execute(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Timeline(a) => cmd_timeline(a),
        Command::Check(a) => cmd_check(a),
    }
}

/// Parses arguments and runs, mapping every failure to exit status 1.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_CLEAN };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
