//! Clash detection: coordination the architecture requires, checked against
//! the coordination that actually happened.
//!
//! Three pattern families are implemented:
//!
//! * Conway's Law (`conway_*`): every required pair must talk, and should
//!   not talk only weakly.
//! * Betweenness Centrality Match (`bcm_*`): the people who broker the most
//!   shortest paths should be the ones the manager expects, or leads and
//!   managers; expected experts should not drift to the periphery.
//! * Code Ownership (`ownership_*`): each module needs one clear owner and
//!   should not be abandoned.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{classify_edges, CentralitySeries};
use crate::model::{
    ActorId, ArchitectureModel, CentralityRecord, ChangeRecord, CommGraph, ComponentId, Evidence,
    Finding, FindingWindow, Pattern, RequirementReason, Severity, StrengthClass, Violation,
};

/// How strong a required link must be before it stops being reported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequiredStrength {
    /// Any link satisfies the requirement; weak ones are still reported as
    /// warnings.
    #[default]
    Any,
    /// Weak links on required pairs are escalated to alerts.
    Strong,
}

/// The `detect` section of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub expected_central: Vec<ActorId>,
    pub top_k: usize,
    pub peripheral_percentile: f64,
    #[serde(with = "crate::duration")]
    pub ownership_window: Duration,
    #[serde(with = "crate::duration")]
    pub staleness: Duration,
    pub min_required_strength: RequiredStrength,
    /// Modules that are allowed to sit untouched; staleness there is info.
    pub stable_modules: BTreeSet<String>,
    /// Reference instant for ownership checks. Defaults to the end of the
    /// last analysed window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub now: Option<DateTime<Utc>>,
}

const DAY: u64 = 86_400;

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            expected_central: Vec::new(),
            top_k: 3,
            peripheral_percentile: 0.5,
            ownership_window: Duration::from_secs(28 * DAY),
            staleness: Duration::from_secs(56 * DAY),
            min_required_strength: RequiredStrength::Any,
            stable_modules: BTreeSet::new(),
            now: None,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self, model: &ArchitectureModel) -> Vec<Violation> {
        let mut out = Vec::new();
        let problem = |problem: String| Violation {
            subject: "detect".to_owned(),
            problem,
        };
        for id in &self.expected_central {
            if !model.has_actor(id.as_str()) {
                out.push(problem(format!("expected_central actor {:?} is not rostered", id.as_str())));
            }
        }
        if self.top_k == 0 {
            out.push(problem("top_k must be positive".to_owned()));
        } else if self.top_k > model.actors.len() {
            out.push(problem(format!(
                "top_k {} exceeds roster size {}",
                self.top_k,
                model.actors.len()
            )));
        }
        if !(self.peripheral_percentile > 0.0 && self.peripheral_percentile < 1.0) {
            out.push(problem(format!(
                "peripheral_percentile {} must lie strictly between 0 and 1",
                self.peripheral_percentile
            )));
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectError {
    #[error("actors missing from the roster: {}", .0.join(", "))]
    UnknownActors(Vec<String>),
    #[error("centrality series covers {series} window(s) but {graphs} graph(s) were given")]
    WindowMismatch { graphs: usize, series: usize },
}

/// A pair of people the architecture expects to coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredEdge {
    /// Sorted, distinct.
    pub pair: (ActorId, ActorId),
    pub reasons: BTreeSet<RequirementReason>,
    pub via: BTreeSet<ComponentId>,
}

/// Pairs that must coordinate: everyone sharing a component, and everyone on
/// either side of a component dependency. Merged per pair, sorted by pair.
pub fn required_edges(model: &ArchitectureModel) -> Vec<RequiredEdge> {
    let teams = model.teams();
    let mut merged: BTreeMap<(ActorId, ActorId), RequiredEdge> = BTreeMap::new();
    let mut add = |a: &ActorId, b: &ActorId, reason: RequirementReason, via: &[&ComponentId]| {
        if a == b {
            return;
        }
        let pair = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        let entry = merged.entry(pair.clone()).or_insert_with(|| RequiredEdge {
            pair,
            reasons: BTreeSet::new(),
            via: BTreeSet::new(),
        });
        entry.reasons.insert(reason);
        entry.via.extend(via.iter().map(|c| (*c).clone()));
    };

    for (component, members) in &teams {
        let members: Vec<_> = members.iter().collect();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                add(a, b, RequirementReason::CoAssignment, &[component]);
            }
        }
    }
    let empty = BTreeSet::new();
    for dep in &model.dependencies {
        let from = teams.get(&dep.from).unwrap_or(&empty);
        let to = teams.get(&dep.to).unwrap_or(&empty);
        for a in from {
            for b in to {
                add(a, b, RequirementReason::CrossDependency, &[&dep.from, &dep.to]);
            }
        }
    }
    merged.into_values().collect()
}

fn severity_order(findings: &mut [Finding]) {
    findings.sort_by(|x, y| {
        (x.severity, &x.actors, x.pattern, &x.components_or_modules).cmp(&(
            y.severity,
            &y.actors,
            y.pattern,
            &y.components_or_modules,
        ))
    });
}

/// Conway's Law check for one window.
pub fn detect_conway(graph: &CommGraph, model: &ArchitectureModel, config: &DetectConfig) -> Vec<Finding> {
    detect_conway_with(graph, &required_edges(model), config)
}

/// As [`detect_conway`] with the required pairs computed up front.
pub fn detect_conway_with(graph: &CommGraph, required: &[RequiredEdge], config: &DetectConfig) -> Vec<Finding> {
    let strengths: BTreeMap<(ActorId, ActorId), (u64, StrengthClass)> = classify_edges(graph)
        .into_iter()
        .map(|e| ((e.a, e.b), (e.weight, e.class)))
        .collect();
    let window_max = strengths.values().map(|(w, _)| *w).max().unwrap_or(0);
    let window = FindingWindow::Span(graph.window);

    let mut out = Vec::new();
    for req in required {
        let (a, b) = (&req.pair.0, &req.pair.1);
        let reasons: Vec<_> = req.reasons.iter().copied().collect();
        let via: Vec<_> = req.via.iter().cloned().collect();
        let components = via.iter().map(|c| c.as_str().to_owned()).collect();
        match strengths.get(&req.pair) {
            None => out.push(Finding::new(
                Pattern::ConwayMissingLink,
                window,
                vec![a.clone(), b.clone()],
                components,
                Evidence::MissingLink {
                    reasons,
                    via,
                    observed_weight: 0,
                },
                Severity::Alert,
            )),
            Some(&(weight, StrengthClass::Weak)) => {
                let severity = match config.min_required_strength {
                    RequiredStrength::Any => Severity::Warning,
                    RequiredStrength::Strong => Severity::Alert,
                };
                out.push(Finding::new(
                    Pattern::ConwayWeakLink,
                    window,
                    vec![a.clone(), b.clone()],
                    components,
                    Evidence::WeakLink {
                        reasons,
                        via,
                        weight,
                        window_max,
                    },
                    severity,
                ))
            }
            Some(_) => {}
        }
    }
    severity_order(&mut out);
    out
}

/// Actors ranked by raw betweenness, highest first, ties by id.
pub fn rank_by_betweenness(records: &[CentralityRecord]) -> Vec<&CentralityRecord> {
    let mut ranked: Vec<_> = records.iter().collect();
    ranked.sort_by(|x, y| {
        y.betweenness_raw
            .total_cmp(&x.betweenness_raw)
            .then_with(|| x.actor.cmp(&y.actor))
    });
    ranked
}

/// Betweenness Centrality Match for the records of one window.
///
/// An actor is unexpectedly central when it is in the top `top_k`, brokers
/// at least one path, is not expected, and holds no lead or manager role.
/// An expected actor is peripheral when it sits outside the top `top_k` and
/// below rank `ceil(peripheral_percentile * ranked)`.
pub fn detect_betweenness_match(
    records: &[CentralityRecord],
    model: &ArchitectureModel,
    config: &DetectConfig,
) -> Vec<Finding> {
    if config.expected_central.is_empty() {
        log::info!("no expected_central actors configured, betweenness match skipped");
        return Vec::new();
    }
    let Some(window) = records.first().map(|r| r.window) else {
        return Vec::new();
    };
    debug_assert!(records.iter().all(|r| r.window == window));
    let window_ref = FindingWindow::Span(window);
    let expected: BTreeSet<&ActorId> = config.expected_central.iter().collect();
    let mut expected_sorted: Vec<ActorId> = expected.iter().map(|a| (*a).clone()).collect();
    expected_sorted.sort();

    let ranked = rank_by_betweenness(records);
    let n = ranked.len();
    let cutoff_rank = ((config.peripheral_percentile * n as f64).ceil() as usize).max(config.top_k);
    let coordinator = |id: &ActorId| model.actor(id.as_str()).is_some_and(|a| a.is_coordinator());
    let components = |id: &ActorId| {
        model
            .components_of(id.as_str())
            .into_iter()
            .map(|c| c.as_str().to_owned())
            .collect::<Vec<_>>()
    };

    let mut out = Vec::new();
    for (idx, rec) in ranked.iter().enumerate() {
        let rank = idx + 1;
        let is_expected = expected.contains(&rec.actor);
        if rank <= config.top_k && !is_expected && rec.betweenness_raw > 0.0 && !coordinator(&rec.actor) {
            out.push(Finding::new(
                Pattern::BcmUnexpectedCentral,
                window_ref,
                vec![rec.actor.clone()],
                components(&rec.actor),
                Evidence::UnexpectedCentral {
                    rank,
                    value: rec.betweenness_raw,
                    expected: expected_sorted.clone(),
                },
                Severity::Alert,
            ));
        }
        if is_expected && rank > cutoff_rank {
            out.push(Finding::new(
                Pattern::BcmExpectedPeripheral,
                window_ref,
                vec![rec.actor.clone()],
                components(&rec.actor),
                Evidence::ExpectedPeripheral {
                    rank,
                    value: rec.betweenness_raw,
                    ranked: n,
                    cutoff_rank,
                },
                Severity::Warning,
            ));
        }
    }
    severity_order(&mut out);
    out
}

/// Code Ownership check over the whole change log.
pub fn detect_ownership(changes: &[ChangeRecord], now: DateTime<Utc>, config: &DetectConfig) -> Vec<Finding> {
    let window_start = now - crate::duration::to_delta(config.ownership_window);
    let stale_before = now - crate::duration::to_delta(config.staleness);

    let mut by_module: BTreeMap<&str, Vec<&ChangeRecord>> = BTreeMap::new();
    for c in changes {
        by_module.entry(c.module.as_str()).or_default().push(c);
    }

    let mut out = Vec::new();
    for (module, recs) in by_module {
        let mut counts: BTreeMap<ActorId, usize> = BTreeMap::new();
        for c in recs.iter().filter(|c| c.timestamp >= window_start && c.timestamp <= now) {
            *counts.entry(c.actor.clone()).or_insert(0) += 1;
        }
        let total: usize = counts.values().sum();
        let top = counts.values().copied().max().unwrap_or(0);
        if counts.len() >= 2 && top * 2 <= total {
            let actors: Vec<ActorId> = counts.keys().cloned().collect();
            out.push(Finding::new(
                Pattern::OwnershipMultiOwner,
                FindingWindow::All,
                actors.clone(),
                vec![module.to_owned()],
                Evidence::MultiOwner { actors, counts },
                Severity::Warning,
            ));
        }

        let last = recs
            .iter()
            .max_by(|x, y| x.timestamp.cmp(&y.timestamp).then_with(|| y.actor.cmp(&x.actor)))
            .expect("module has at least one change");
        if last.timestamp < stale_before {
            let stable = config.stable_modules.contains(module);
            out.push(Finding::new(
                Pattern::OwnershipStale,
                FindingWindow::All,
                vec![last.actor.clone()],
                vec![module.to_owned()],
                Evidence::Stale {
                    last_change: last.timestamp,
                    idle_days: (now - last.timestamp).num_days(),
                    stable,
                },
                if stable { Severity::Info } else { Severity::Warning },
            ));
        }
    }
    out
}

/// Total order used for reports: window (spans by start, then the run-wide
/// bucket), pattern, actors, components.
pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|x, y| {
        (x.window, x.pattern, &x.actors, &x.components_or_modules, x.severity).cmp(&(
            y.window,
            y.pattern,
            &y.actors,
            &y.components_or_modules,
            y.severity,
        ))
    });
}

/// Reference instant for ownership: configured, else the end of the last
/// window, else the latest change.
pub fn ownership_now(graphs: &[CommGraph], changes: &[ChangeRecord], config: &DetectConfig) -> Option<DateTime<Utc>> {
    config
        .now
        .or_else(|| graphs.iter().map(|g| g.window.end).max())
        .or_else(|| changes.iter().map(|c| c.timestamp).max())
}

/// Runs every checker over every window and returns one sorted list.
pub fn run_all(
    graphs: &[CommGraph],
    series: &CentralitySeries,
    model: &ArchitectureModel,
    changes: &[ChangeRecord],
    config: &DetectConfig,
) -> Result<Vec<Finding>, DetectError> {
    if series.windows.len() != graphs.len() {
        return Err(DetectError::WindowMismatch {
            graphs: graphs.len(),
            series: series.windows.len(),
        });
    }
    let unknown: BTreeSet<String> = graphs
        .iter()
        .flat_map(|g| g.nodes.iter())
        .chain(series.by_actor.keys())
        .filter(|id| !model.has_actor(id.as_str()))
        .map(|id| id.as_str().to_owned())
        .collect();
    if !unknown.is_empty() {
        return Err(DetectError::UnknownActors(unknown.into_iter().collect()));
    }
    if let Some((idx, g)) = graphs
        .iter()
        .enumerate()
        .find(|(i, g)| series.windows[*i] != g.window)
    {
        log::warn!("series window {idx} does not match graph window {:?}", g.window);
        return Err(DetectError::WindowMismatch {
            graphs: graphs.len(),
            series: series.windows.len(),
        });
    }

    let required = required_edges(model);
    let mut out = Vec::new();
    for (idx, graph) in graphs.iter().enumerate() {
        out.extend(detect_conway_with(graph, &required, config));
        out.extend(detect_betweenness_match(&series.records_for(idx), model, config));
    }
    if let Some(now) = ownership_now(graphs, changes, config) {
        out.extend(detect_ownership(changes, now, config));
    }
    sort_findings(&mut out);
    Ok(out)
}
