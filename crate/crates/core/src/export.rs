//! Stable file formats for findings, overlays and the centrality series.
//!
//! Every writer is deterministic: fixed key order, sorted rows, six-decimal
//! reals in CSV, and no wall-clock data unless run metadata is requested.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::CentralitySeries;
use crate::model::{ActorId, ArchitectureModel, CommGraph, EdgeStrength, Finding, StrengthClass};

pub const SCHEMA_VERSION: u32 = 1;

/// Content hash of one input file. `file` is the base name so digests do not
/// depend on where the inputs live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(role: &str, file: &str, contents: &[u8]) -> Self {
        let hash = Sha256::digest(contents);
        Self {
            role: role.to_owned(),
            file: file.to_owned(),
            sha256: format!("{hash:x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub generated_at: DateTime<Utc>,
    pub tool_version: String,
}

impl RunMetadata {
    pub fn now() -> Self {
        Self {
            generated_at: Utc::now(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingsDocument {
    pub schema_version: u32,
    pub generated_from: Vec<InputDigest>,
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_metadata: Option<RunMetadata>,
}

/// Pretty-printed JSON with a trailing newline.
pub fn export_findings_json(
    findings: &[Finding],
    generated_from: &[InputDigest],
    run_metadata: Option<RunMetadata>,
) -> Vec<u8> {
    let doc = FindingsDocument {
        schema_version: SCHEMA_VERSION,
        generated_from: generated_from.to_vec(),
        findings: findings.to_vec(),
        run_metadata,
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("findings always serialize");
    out.push(b'\n');
    out
}

pub fn parse_findings_json<R: Read>(input: R) -> serde_json::Result<FindingsDocument> {
    serde_json::from_reader(input)
}

fn quote(id: &str) -> String {
    let mut s = String::with_capacity(id.len() + 2);
    s.push('"');
    for ch in id.chars() {
        match ch {
            '"' => s.push_str("\\\""),
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            c => s.push(c),
        }
    }
    s.push('"');
    s
}

/// Graphviz overlay of one window: a `cluster_<component>` subgraph per
/// component holding its assigned actors, social links styled by strength
/// (solid strong, dashed weak), and dependencies drawn between clusters.
///
/// Actors assigned to several components sit in the first one by id and
/// carry a dashed outline plus an `also:` note naming the rest.
pub fn export_overlay_dot(graph: &CommGraph, model: &ArchitectureModel, strengths: &[EdgeStrength]) -> Vec<u8> {
    let mut home: BTreeMap<&ActorId, Vec<&str>> = BTreeMap::new();
    let mut assignments: Vec<_> = model.assignments.iter().collect();
    assignments.sort_by(|x, y| (&x.component, &x.actor).cmp(&(&y.component, &y.actor)));
    for a in &assignments {
        if graph.nodes.contains(&a.actor) {
            let list = home.entry(&a.actor).or_default();
            if !list.contains(&a.component.as_str()) {
                list.push(a.component.as_str());
            }
        }
    }

    let mut components: Vec<_> = model.components.iter().collect();
    components.sort_by(|x, y| x.id.cmp(&y.id));
    let mut members: BTreeMap<&str, Vec<&ActorId>> =
        components.iter().map(|c| (c.id.as_str(), Vec::new())).collect();
    for (actor, comps) in &home {
        if let Some(list) = members.get_mut(comps[0]) {
            list.push(actor);
        }
    }

    let node_line = |out: &mut String, indent: &str, actor: &ActorId| {
        let mut attrs = vec![format!("label={}", quote(actor.as_str()))];
        match home.get(actor) {
            Some(comps) if comps.len() > 1 => {
                attrs.push("style=dashed".to_owned());
                attrs.push(format!("xlabel={}", quote(&format!("also: {}", comps[1..].join(", ")))));
            }
            Some(_) => {}
            None => attrs.push("shape=box".to_owned()),
        }
        let _ = writeln!(out, "{indent}{} [{}];", quote(actor.as_str()), attrs.join(", "));
    };

    let w = graph.window;
    let mut out = String::new();
    let _ = writeln!(out, "graph {} {{", quote(&format!("overlay_{}", w.label())));
    let _ = writeln!(
        out,
        "  graph [compound=true, label={}];",
        quote(&format!(
            "{} to {}",
            w.start.to_rfc3339_opts(SecondsFormat::Secs, true),
            w.end.to_rfc3339_opts(SecondsFormat::Secs, true)
        ))
    );
    out.push_str("  node [shape=ellipse];\n");

    for c in &components {
        let _ = writeln!(out, "  subgraph {} {{", quote(&format!("cluster_{}", c.id)));
        let _ = writeln!(out, "    label={};", quote(&c.name));
        for actor in &members[c.id.as_str()] {
            node_line(&mut out, "    ", actor);
        }
        out.push_str("  }\n");
    }
    for actor in graph.nodes.iter().filter(|a| !home.contains_key(a)) {
        node_line(&mut out, "  ", actor);
    }

    let mut edges: Vec<_> = strengths.iter().collect();
    edges.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    for e in edges {
        let style = match e.class {
            StrengthClass::Strong => "solid",
            StrengthClass::Weak => "dashed",
        };
        let _ = writeln!(
            out,
            "  {} -- {} [style={style}, weight={}, label=\"{}\"];",
            quote(e.a.as_str()),
            quote(e.b.as_str()),
            e.weight,
            e.weight
        );
    }

    let mut deps: Vec<_> = model.dependencies.iter().collect();
    deps.sort_by(|x, y| (&x.from, &x.to, &x.kind).cmp(&(&y.from, &y.to, &y.kind)));
    for d in deps {
        let anchor = |id: &str| members.get(id).and_then(|m| m.first().copied());
        match (anchor(d.from.as_str()), anchor(d.to.as_str())) {
            (Some(from), Some(to)) => {
                let _ = writeln!(
                    out,
                    "  {} -- {} [ltail={}, lhead={}, dir=forward, style=bold, color=gray40, label={}];",
                    quote(from.as_str()),
                    quote(to.as_str()),
                    quote(&format!("cluster_{}", d.from)),
                    quote(&format!("cluster_{}", d.to)),
                    quote(&d.kind)
                );
            }
            _ => {
                let _ = writeln!(
                    out,
                    "  // dependency {} -> {} ({}) not drawn: empty cluster",
                    d.from, d.to, d.kind
                );
            }
        }
    }
    out.push_str("}\n");
    out.into_bytes()
}

pub const CSV_HEADER: [&str; 7] = [
    "window_start",
    "actor",
    "in_degree",
    "out_degree",
    "total_degree",
    "betweenness_raw",
    "betweenness_norm",
];

/// One row per (window, actor), windows in order, actors by id.
pub fn export_timeseries_csv(series: &CentralitySeries) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer.write_record(CSV_HEADER).expect("in-memory write");
    for idx in 0..series.windows.len() {
        for rec in series.records_for(idx) {
            writer
                .write_record([
                    rec.window.start.to_rfc3339_opts(SecondsFormat::Secs, true),
                    rec.actor.to_string(),
                    rec.in_degree.to_string(),
                    rec.out_degree.to_string(),
                    rec.total_degree.to_string(),
                    format!("{:.6}", rec.betweenness_raw),
                    format!("{:.6}", rec.betweenness_norm),
                ])
                .expect("in-memory write");
        }
    }
    writer.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TimeseriesRow {
    pub window_start: DateTime<Utc>,
    pub actor: ActorId,
    pub in_degree: usize,
    pub out_degree: usize,
    pub total_degree: usize,
    pub betweenness_raw: f64,
    pub betweenness_norm: f64,
}

pub fn read_timeseries_csv<R: Read>(input: R) -> csv::Result<Vec<TimeseriesRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
