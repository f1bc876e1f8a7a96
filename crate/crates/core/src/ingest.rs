//! Reading chat logs, architecture manifests and change logs, and cutting
//! the resulting event stream into fixed-length windows.
//!
//! Two chat formats are accepted. The canonical one is JSON Lines:
//!
//! ```text
//! {"ts":"2006-10-02T09:15:00Z","from":"jonve","to":"judva","bytes":142}
//! ```
//!
//! The XMPP adapter reads an XML dump of `<message>` stanzas and maps each
//! onto the same record. Both parsers drop self-messages and malformed
//! records, counting them in an [`IngestReport`].

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read};
use std::time::Duration;

use chrono::{DateTime, NaiveDateTime, TimeDelta, Timelike, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetectConfig;
use crate::model::{
    validate_model, Actor, ActorId, ArchitectureModel, Assignment, ChangeRecord, CommEvent,
    CommGraph, Component, DependencyEdge, Violation, Window,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("manifest rejected with {} violation(s): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub events_read: usize,
    pub events_retained: usize,
    pub events_dropped_self: usize,
    pub events_dropped_unparseable: usize,
    pub events_dropped_groupchat: usize,
    pub actors_auto_registered: usize,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn dropped(&self) -> usize {
        self.events_dropped_self + self.events_dropped_unparseable + self.events_dropped_groupchat
    }

    /// Folds another stream's report into this one.
    pub fn merge(&mut self, other: IngestReport) {
        self.events_read += other.events_read;
        self.events_retained += other.events_retained;
        self.events_dropped_self += other.events_dropped_self;
        self.events_dropped_unparseable += other.events_dropped_unparseable;
        self.events_dropped_groupchat += other.events_dropped_groupchat;
        self.actors_auto_registered += other.actors_auto_registered;
        self.warnings.extend(other.warnings);
    }
}

/// Outcome of screening one raw record.
enum Screened {
    Keep(CommEvent),
    SelfMessage,
}

fn screen(sender: ActorId, recipient: ActorId, timestamp: DateTime<Utc>, bytes: Option<u64>) -> Screened {
    if sender == recipient {
        Screened::SelfMessage
    } else {
        Screened::Keep(CommEvent {
            sender,
            recipient,
            timestamp,
            bytes,
        })
    }
}

fn finish(mut events: Vec<CommEvent>, mut report: IngestReport) -> (Vec<CommEvent>, IngestReport) {
    events.sort_by_key(|e| e.timestamp);
    report.events_retained = events.len();
    debug_assert_eq!(report.events_read, report.events_retained + report.dropped());
    (events, report)
}

fn parse_rfc3339(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| truncate_to_second(t.with_timezone(&Utc)))
        .map_err(|e| format!("invalid timestamp {s:?}: {e}"))
}

fn truncate_to_second(t: DateTime<Utc>) -> DateTime<Utc> {
    t.with_nanosecond(0).unwrap_or(t)
}

#[derive(Deserialize)]
struct CanonicalLine {
    ts: String,
    from: String,
    to: String,
    #[serde(default)]
    bytes: Option<u64>,
}

/// Parses newline-delimited JSON chat records. Blank lines are skipped and
/// not counted.
pub fn parse_chat_canonical<R: Read>(input: R) -> Result<(Vec<CommEvent>, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let mut events = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.events_read += 1;
        let parsed = serde_json::from_str::<CanonicalLine>(&line)
            .map_err(|e| e.to_string())
            .and_then(|rec| {
                if rec.from.trim().is_empty() || rec.to.trim().is_empty() {
                    return Err("empty sender or recipient".to_owned());
                }
                let ts = parse_rfc3339(&rec.ts)?;
                Ok((rec, ts))
            });
        match parsed {
            Ok((rec, ts)) => match screen(ActorId::new(rec.from), ActorId::new(rec.to), ts, rec.bytes) {
                Screened::Keep(ev) => events.push(ev),
                Screened::SelfMessage => report.events_dropped_self += 1,
            },
            Err(msg) => {
                report.events_dropped_unparseable += 1;
                report.warnings.push(format!("line {lineno}: {msg}"));
            }
        }
    }
    Ok(finish(events, report))
}

/// `jonve@host/resource` -> `jonve`. Identifiers without a node part keep
/// everything before the resource.
pub fn bare_actor_id(jid: &str) -> &str {
    let jid = jid.trim();
    match jid.find('@') {
        Some(at) => &jid[..at],
        None => jid.split('/').next().unwrap_or(""),
    }
}

/// Accepts RFC 3339 and the legacy `CCYYMMDDThh:mm:ss` delay stamp (UTC).
fn parse_stanza_time(s: &str) -> Result<DateTime<Utc>, String> {
    parse_rfc3339(s).or_else(|err| {
        NaiveDateTime::parse_from_str(s.trim(), "%Y%m%dT%H:%M:%S")
            .map(|n| truncate_to_second(n.and_utc()))
            .map_err(|_| err)
    })
}

#[derive(Default)]
struct Stanza {
    offset: u64,
    from: Option<String>,
    to: Option<String>,
    kind: Option<String>,
    stamp: Option<String>,
    child_stamp: Option<String>,
    bytes_attr: Option<String>,
    body: Option<String>,
    // which child element's text is being collected
    capture: Option<Capture>,
    depth: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Capture {
    Body,
    Timestamp,
}

fn xml_err(offset: u64, e: impl std::fmt::Display) -> IngestError {
    IngestError::Xml {
        offset,
        message: e.to_string(),
    }
}

fn attr_value(e: &BytesStart<'_>, name: &[u8], offset: u64) -> Result<Option<String>, IngestError> {
    for attr in e.attributes() {
        let attr = attr.map_err(|err| xml_err(offset, err))?;
        if attr.key.local_name().as_ref() == name {
            let v = attr.unescape_value().map_err(|err| xml_err(offset, err))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

impl Stanza {
    fn open(e: &BytesStart<'_>, offset: u64) -> Result<Self, IngestError> {
        let mut st = Stanza {
            offset,
            from: attr_value(e, b"from", offset)?,
            to: attr_value(e, b"to", offset)?,
            kind: attr_value(e, b"type", offset)?,
            bytes_attr: attr_value(e, b"bytes", offset)?,
            ..Default::default()
        };
        for key in [&b"stamp"[..], b"ts", b"timestamp"] {
            if let Some(v) = attr_value(e, key, offset)? {
                st.stamp = Some(v);
                break;
            }
        }
        Ok(st)
    }

    fn child(&mut self, e: &BytesStart<'_>, is_empty: bool) -> Result<(), IngestError> {
        match e.local_name().as_ref() {
            b"delay" | b"x" => {
                if self.child_stamp.is_none() {
                    self.child_stamp = attr_value(e, b"stamp", self.offset)?;
                }
            }
            b"body" if !is_empty && self.depth == 0 => {
                self.capture = Some(Capture::Body);
                self.body.get_or_insert_with(String::new);
            }
            b"body" if is_empty => {
                self.body.get_or_insert_with(String::new);
            }
            b"timestamp" if !is_empty && self.depth == 0 => self.capture = Some(Capture::Timestamp),
            _ => {}
        }
        Ok(())
    }

    fn text(&mut self, t: &str) {
        match self.capture {
            Some(Capture::Body) => self.body.get_or_insert_with(String::new).push_str(t),
            Some(Capture::Timestamp) => {
                self.child_stamp.get_or_insert_with(String::new).push_str(t);
            }
            None => {}
        }
    }

    fn close(self, events: &mut Vec<CommEvent>, report: &mut IngestReport) {
        report.events_read += 1;
        let at = self.offset;
        let mut reject = |why: String| {
            report.events_dropped_unparseable += 1;
            report.warnings.push(format!("stanza at byte {at}: {why}"));
        };
        match self.kind.as_deref() {
            Some("groupchat") => {
                report.events_dropped_groupchat += 1;
                report
                    .warnings
                    .push(format!("stanza at byte {at}: group chat is not pairwise, dropped"));
                return;
            }
            Some("error") => return reject("error stanza".to_owned()),
            _ => {}
        }
        let Some(from) = self.from.as_deref().map(bare_actor_id).filter(|s| !s.is_empty()) else {
            return reject("missing from".to_owned());
        };
        let Some(to) = self.to.as_deref().map(bare_actor_id).filter(|s| !s.is_empty()) else {
            return reject("missing to".to_owned());
        };
        let Some(raw_ts) = self.stamp.or(self.child_stamp) else {
            return reject("missing timestamp".to_owned());
        };
        let ts = match parse_stanza_time(&raw_ts) {
            Ok(ts) => ts,
            Err(e) => return reject(e),
        };
        let bytes = match self.bytes_attr {
            Some(b) => match b.trim().parse::<u64>() {
                Ok(n) => Some(n),
                Err(_) => return reject(format!("invalid bytes {b:?}")),
            },
            None => self.body.map(|b| b.len() as u64),
        };
        match screen(ActorId::new(from), ActorId::new(to), ts, bytes) {
            Screened::Keep(ev) => events.push(ev),
            Screened::SelfMessage => report.events_dropped_self += 1,
        }
    }
}

/// Parses an XML dump of Jabber `<message>` stanzas. Other stanzas
/// (presence, iq) are ignored and not counted.
pub fn parse_chat_xmpp_xml<R: Read>(mut input: R) -> Result<(Vec<CommEvent>, IngestReport), IngestError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut reader = Reader::from_str(&text);

    let mut report = IngestReport::default();
    let mut events = Vec::new();
    let mut open: Option<Stanza> = None;
    let mut depth = 0usize;
    let mut saw_root = false;

    loop {
        let offset = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| xml_err(reader.error_position(), e))?;
        match event {
            Event::Start(e) => {
                saw_root = true;
                depth += 1;
                match open.as_mut() {
                    Some(st) => {
                        st.child(&e, false)?;
                        st.depth += 1;
                    }
                    None if e.local_name().as_ref() == b"message" => {
                        open = Some(Stanza::open(&e, offset)?);
                    }
                    None => {}
                }
            }
            Event::Empty(e) => {
                saw_root = true;
                match open.as_mut() {
                    Some(st) => st.child(&e, true)?,
                    None if e.local_name().as_ref() == b"message" => {
                        Stanza::open(&e, offset)?.close(&mut events, &mut report);
                    }
                    None => {}
                }
            }
            Event::End(_) => {
                depth = depth.saturating_sub(1);
                if let Some(st) = open.as_mut() {
                    if st.depth == 0 {
                        let st = open.take().expect("open stanza");
                        st.close(&mut events, &mut report);
                    } else {
                        st.depth -= 1;
                        if st.depth == 0 {
                            st.capture = None;
                        }
                    }
                }
            }
            Event::Text(t) => {
                if let Some(st) = open.as_mut() {
                    let t = t.unescape().map_err(|e| xml_err(offset, e))?;
                    st.text(&t);
                } else if depth == 0 && !t.iter().all(u8::is_ascii_whitespace) {
                    return Err(xml_err(offset, "text outside the root element"));
                }
            }
            Event::CData(c) => {
                if let Some(st) = open.as_mut() {
                    st.text(&String::from_utf8_lossy(&c));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if depth != 0 {
        return Err(xml_err(reader.buffer_position(), "unexpected end of document, unclosed element"));
    }
    if !saw_root && !text.trim().is_empty() && !text.trim_start().starts_with("<?") {
        return Err(xml_err(0, "no root element"));
    }
    Ok(finish(events, report))
}

/// Time-slicing settings from the manifest's `windowing` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowingConfig {
    #[serde(with = "crate::duration::option", skip_serializing_if = "Option::is_none")]
    pub length: Option<Duration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<DateTime<Utc>>,
}

/// A loaded project manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub model: ArchitectureModel,
    pub detect: DetectConfig,
    pub windowing: WindowingConfig,
    pub warnings: Vec<String>,
}

const MANIFEST_KEYS: [&str; 6] = [
    "actors",
    "components",
    "dependencies",
    "assignments",
    "detect",
    "windowing",
];

#[derive(Deserialize)]
struct ManifestDoc {
    #[serde(default)]
    actors: Vec<Actor>,
    #[serde(default)]
    components: Vec<Component>,
    #[serde(default)]
    dependencies: Vec<DependencyEdge>,
    #[serde(default)]
    assignments: Vec<Assignment>,
    #[serde(default)]
    detect: DetectConfig,
    #[serde(default)]
    windowing: WindowingConfig,
}

fn syntax(e: serde_json::Error) -> IngestError {
    IngestError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Loads and validates an architecture manifest. Unknown top-level keys
/// are reported as warnings; every validation violation is returned at once.
pub fn load_architecture<R: Read>(mut input: R) -> Result<Manifest, IngestError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(syntax)?;
    let Some(obj) = raw.as_object() else {
        return Err(IngestError::Syntax {
            line: 1,
            column: 1,
            message: "manifest must be a JSON object".to_owned(),
        });
    };
    let warnings = obj
        .keys()
        .filter(|k| !MANIFEST_KEYS.contains(&k.as_str()))
        .map(|k| format!("unknown manifest key {k:?} ignored"))
        .collect();
    let mut doc: ManifestDoc = serde_json::from_str(&text).map_err(syntax)?;
    let explicit_top_k = obj
        .get("detect")
        .and_then(|d| d.as_object())
        .is_some_and(|d| d.contains_key("top_k"));
    if !explicit_top_k {
        doc.detect.top_k = doc.detect.top_k.min(doc.actors.len()).max(1);
    }
    let model = ArchitectureModel {
        actors: doc.actors,
        components: doc.components,
        dependencies: doc.dependencies,
        assignments: doc.assignments,
    };
    let mut violations = validate_model(&model);
    violations.extend(doc.detect.validate(&model));
    if !violations.is_empty() {
        return Err(IngestError::Invalid(violations));
    }
    Ok(Manifest {
        model,
        detect: doc.detect,
        windowing: doc.windowing,
        warnings,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub records_read: usize,
    pub records_dropped: usize,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct ChangeLine {
    ts: String,
    actor: String,
    module: String,
}

/// Parses newline-delimited JSON change records, sorted by timestamp.
pub fn load_changes<R: Read>(input: R) -> Result<(Vec<ChangeRecord>, ChangeReport), IngestError> {
    let mut report = ChangeReport::default();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.records_read += 1;
        let parsed = serde_json::from_str::<ChangeLine>(&line)
            .map_err(|e| e.to_string())
            .and_then(|rec| {
                if rec.module.trim().is_empty() {
                    return Err("empty module".to_owned());
                }
                if rec.actor.trim().is_empty() {
                    return Err("empty actor".to_owned());
                }
                let ts = parse_rfc3339(&rec.ts)?;
                Ok(ChangeRecord {
                    actor: ActorId::new(rec.actor),
                    module: rec.module,
                    timestamp: ts,
                })
            });
        match parsed {
            Ok(rec) => out.push(rec),
            Err(msg) => {
                report.records_dropped += 1;
                report.warnings.push(format!("line {}: {msg}", idx + 1));
            }
        }
    }
    out.sort_by_key(|r| r.timestamp);
    Ok((out, report))
}

/// Adds every chat participant missing from the roster as an auto-registered
/// actor with no roles. Returns the ids added, sorted.
pub fn register_unknown_actors(model: &mut ArchitectureModel, events: &[CommEvent]) -> Vec<ActorId> {
    let known: BTreeSet<ActorId> = model.actors.iter().map(|a| a.id.clone()).collect();
    let unknown: BTreeSet<ActorId> = events
        .iter()
        .flat_map(|e| [&e.sender, &e.recipient])
        .filter(|id| !known.contains(*id))
        .cloned()
        .collect();
    model.actors.extend(unknown.iter().cloned().map(Actor::auto));
    unknown.into_iter().collect()
}

/// Midnight UTC of the first event's day.
pub fn default_origin(events: &[CommEvent]) -> Option<DateTime<Utc>> {
    events
        .iter()
        .map(|e| e.timestamp)
        .min()
        .map(|t| t.date_naive().and_time(chrono::NaiveTime::MIN).and_utc())
}

fn window_index(t: DateTime<Utc>, origin: DateTime<Utc>, length_secs: i64) -> i64 {
    (t - origin).num_seconds().div_euclid(length_secs)
}

/// Fixed-length half-open windows aligned to `origin` that cover every
/// event. Windows with no events in between are still produced.
pub fn build_windows(events: &[CommEvent], origin: DateTime<Utc>, length: Duration) -> Vec<Window> {
    let length_secs = i64::try_from(length.as_secs()).unwrap_or(i64::MAX);
    assert!(length_secs > 0, "window length must be at least one second");
    let (Some(first), Some(last)) = (
        events.iter().map(|e| e.timestamp).min(),
        events.iter().map(|e| e.timestamp).max(),
    ) else {
        return Vec::new();
    };
    let lo = window_index(first, origin, length_secs);
    let hi = window_index(last, origin, length_secs);
    (lo..=hi)
        .map(|k| {
            let start = origin + TimeDelta::seconds(length_secs * k);
            Window::new(start, start + TimeDelta::seconds(length_secs))
        })
        .collect()
}

/// Events with timestamps in `window`, given events sorted by timestamp.
pub fn events_in<'a>(events: &'a [CommEvent], window: &Window) -> &'a [CommEvent] {
    let lo = events.partition_point(|e| e.timestamp < window.start);
    let hi = events.partition_point(|e| e.timestamp < window.end);
    &events[lo..hi.max(lo)]
}

/// Counts messages per ordered pair within the window. Nodes are everyone
/// who chatted in the window plus every rostered developer, lead and
/// manager, so silent team members show up as isolates.
pub fn build_comm_graph(events: &[CommEvent], window: Window, model: &ArchitectureModel) -> CommGraph {
    let mut graph = CommGraph::empty(window, model.analysis_roster());
    for e in events_in(events, &window) {
        if e.sender == e.recipient {
            continue;
        }
        graph.nodes.insert(e.sender.clone());
        graph.nodes.insert(e.recipient.clone());
        *graph
            .edges
            .entry((e.sender.clone(), e.recipient.clone()))
            .or_insert(0) += 1;
    }
    graph
}

pub fn build_comm_graphs(events: &[CommEvent], windows: &[Window], model: &ArchitectureModel) -> Vec<CommGraph> {
    windows
        .iter()
        .map(|w| build_comm_graph(events, *w, model))
        .collect()
}
