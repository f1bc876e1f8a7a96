//! Domain types shared by ingestion, metrics, detection and export.
//!
//! Everything here is a plain value. The only logic is [`validate_model`],
//! which reports broken references and duplicates as data.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// Chat handle identifying a person. Display names are kept separately so
/// fixtures can stay anonymized.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(String);

impl ActorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActorId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl std::borrow::Borrow<str> for ActorId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(String);

impl ComponentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl std::borrow::Borrow<str> for ComponentId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Developer,
    ProjectLead,
    ProjectManager,
    Other,
}

impl Role {
    /// Leads and managers are expected to sit in the middle of the network.
    pub fn is_coordinator(self) -> bool {
        matches!(self, Role::ProjectLead | Role::ProjectManager)
    }

    /// Roles whose holders take part in the communication analysis.
    pub fn is_analysed(self) -> bool {
        !matches!(self, Role::Other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    #[serde(default)]
    pub roles: BTreeSet<Role>,
    /// Set for actors that showed up in chat logs without a roster entry.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub auto_registered: bool,
}

impl Actor {
    pub fn new(id: impl Into<String>, roles: impl IntoIterator<Item = Role>) -> Self {
        Self {
            id: ActorId::new(id),
            display_name: None,
            roles: roles.into_iter().collect(),
            auto_registered: false,
        }
    }

    pub fn auto(id: ActorId) -> Self {
        Self {
            id,
            display_name: None,
            roles: BTreeSet::new(),
            auto_registered: true,
        }
    }

    pub fn is_coordinator(&self) -> bool {
        self.roles.iter().any(|r| r.is_coordinator())
    }

    pub fn is_analysed(&self) -> bool {
        self.roles.iter().any(|r| r.is_analysed())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub from: ComponentId,
    pub to: ComponentId,
    #[serde(default)]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub actor: ActorId,
    pub component: ComponentId,
    pub role: Role,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureModel {
    pub actors: Vec<Actor>,
    pub components: Vec<Component>,
    pub dependencies: Vec<DependencyEdge>,
    pub assignments: Vec<Assignment>,
}

impl ArchitectureModel {
    pub fn actor(&self, id: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id.as_str() == id)
    }

    pub fn has_actor(&self, id: &str) -> bool {
        self.actor(id).is_some()
    }

    /// Rostered developers, leads and managers. These appear in every
    /// window's graph whether or not they talked.
    pub fn analysis_roster(&self) -> BTreeSet<ActorId> {
        self.actors
            .iter()
            .filter(|a| a.is_analysed())
            .map(|a| a.id.clone())
            .collect()
    }

    /// Component ids each actor is assigned to, sorted.
    pub fn components_of(&self, actor: &str) -> Vec<ComponentId> {
        let set: BTreeSet<_> = self
            .assignments
            .iter()
            .filter(|a| a.actor.as_str() == actor)
            .map(|a| a.component.clone())
            .collect();
        set.into_iter().collect()
    }

    /// Members of each component, keyed and sorted by id.
    pub fn teams(&self) -> BTreeMap<ComponentId, BTreeSet<ActorId>> {
        let mut teams: BTreeMap<ComponentId, BTreeSet<ActorId>> = self
            .components
            .iter()
            .map(|c| (c.id.clone(), BTreeSet::new()))
            .collect();
        for a in &self.assignments {
            teams
                .entry(a.component.clone())
                .or_default()
                .insert(a.actor.clone());
        }
        teams
    }
}

/// One broken invariant, naming the entity at fault.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub problem: String,
}

impl Violation {
    fn new(subject: impl Into<String>, problem: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            problem: problem.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.problem)
    }
}

/// Checks referential integrity and uniqueness. Returns violations in a fixed
/// order: actors, components, dependencies, assignments, each in list order.
pub fn validate_model(model: &ArchitectureModel) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut actor_ids = HashSet::new();
    for actor in &model.actors {
        let id = actor.id.as_str();
        if id.is_empty() {
            out.push(Violation::new("actor \"\"", "id is empty"));
            continue;
        }
        if !actor_ids.insert(id) {
            out.push(Violation::new(format!("actor {id:?}"), "declared more than once"));
        }
        if actor.roles.is_empty() && !actor.auto_registered {
            out.push(Violation::new(format!("actor {id:?}"), "has no roles"));
        }
    }

    let mut component_ids = HashSet::new();
    for component in &model.components {
        let id = component.id.as_str();
        if id.is_empty() {
            out.push(Violation::new("component \"\"", "id is empty"));
            continue;
        }
        if !component_ids.insert(id) {
            out.push(Violation::new(
                format!("component {id:?}"),
                "declared more than once",
            ));
        }
    }

    for dep in &model.dependencies {
        let label = format!("dependency {:?} -> {:?}", dep.from.as_str(), dep.to.as_str());
        if !component_ids.contains(dep.from.as_str()) {
            out.push(Violation::new(
                label.clone(),
                format!("unknown component {:?}", dep.from.as_str()),
            ));
        }
        if !component_ids.contains(dep.to.as_str()) {
            out.push(Violation::new(
                label.clone(),
                format!("unknown component {:?}", dep.to.as_str()),
            ));
        }
        if dep.from == dep.to {
            out.push(Violation::new(label, "component depends on itself"));
        }
    }

    let mut pairs = HashSet::new();
    for asg in &model.assignments {
        let label = format!(
            "assignment {:?} -> {:?}",
            asg.actor.as_str(),
            asg.component.as_str()
        );
        match model.actor(asg.actor.as_str()) {
            None => out.push(Violation::new(
                label.clone(),
                format!("unknown actor {:?}", asg.actor.as_str()),
            )),
            Some(actor) if !actor.roles.contains(&asg.role) => out.push(Violation::new(
                label.clone(),
                format!(
                    "role {} is not held by actor {:?}",
                    role_name(asg.role),
                    asg.actor.as_str()
                ),
            )),
            Some(_) => {}
        }
        if !component_ids.contains(asg.component.as_str()) {
            out.push(Violation::new(
                label.clone(),
                format!("unknown component {:?}", asg.component.as_str()),
            ));
        }
        if !pairs.insert((asg.actor.as_str(), asg.component.as_str())) {
            out.push(Violation::new(label, "duplicate assignment"));
        }
    }

    out
}

pub(crate) fn role_name(role: Role) -> &'static str {
    match role {
        Role::Developer => "developer",
        Role::ProjectLead => "project_lead",
        Role::ProjectManager => "project_manager",
        Role::Other => "other",
    }
}

/// A single chat message between two people.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommEvent {
    pub sender: ActorId,
    pub recipient: ActorId,
    pub timestamp: DateTime<Utc>,
    pub bytes: Option<u64>,
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Window {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        assert!(start < end, "window start must precede end");
        Self { start, end }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    /// Short name used in file names: the ISO week (`2006-W41`) for
    /// week-long windows starting on a Monday, otherwise the compact start
    /// instant (`20061002T000000Z`).
    pub fn label(&self) -> String {
        use chrono::Datelike;
        let monday_midnight = self.start.weekday() == chrono::Weekday::Mon
            && self.start.time() == chrono::NaiveTime::MIN;
        if monday_midnight && self.end - self.start == chrono::TimeDelta::days(7) {
            let week = self.start.iso_week();
            format!("{}-W{:02}", week.year(), week.week())
        } else {
            self.start.format("%Y%m%dT%H%M%SZ").to_string()
        }
    }
}

/// Directed message counts for one window. Edge keys are `(sender, recipient)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    pub window: Window,
    pub nodes: BTreeSet<ActorId>,
    pub edges: BTreeMap<(ActorId, ActorId), u64>,
}

impl CommGraph {
    pub fn empty(window: Window, nodes: BTreeSet<ActorId>) -> Self {
        Self {
            window,
            nodes,
            edges: BTreeMap::new(),
        }
    }

    pub fn weight(&self, from: &ActorId, to: &ActorId) -> u64 {
        self.edges
            .get(&(from.clone(), to.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityRecord {
    pub actor: ActorId,
    pub window: Window,
    pub in_degree: usize,
    pub out_degree: usize,
    pub total_degree: usize,
    pub betweenness_raw: f64,
    pub betweenness_norm: f64,
}

impl CentralityRecord {
    pub fn zero(actor: ActorId, window: Window) -> Self {
        Self {
            actor,
            window,
            in_degree: 0,
            out_degree: 0,
            total_degree: 0,
            betweenness_raw: 0.0,
            betweenness_norm: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthClass {
    Strong,
    Weak,
}

/// Symmetrized link with its rendering class. `a < b` always.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeStrength {
    pub a: ActorId,
    pub b: ActorId,
    pub weight: u64,
    pub class: StrengthClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub actor: ActorId,
    pub module: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    ConwayMissingLink,
    ConwayWeakLink,
    BcmUnexpectedCentral,
    BcmExpectedPeripheral,
    OwnershipMultiOwner,
    OwnershipStale,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::ConwayMissingLink,
        Pattern::ConwayWeakLink,
        Pattern::BcmUnexpectedCentral,
        Pattern::BcmExpectedPeripheral,
        Pattern::OwnershipMultiOwner,
        Pattern::OwnershipStale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::ConwayMissingLink => "conway_missing_link",
            Pattern::ConwayWeakLink => "conway_weak_link",
            Pattern::BcmUnexpectedCentral => "bcm_unexpected_central",
            Pattern::BcmExpectedPeripheral => "bcm_expected_peripheral",
            Pattern::OwnershipMultiOwner => "ownership_multi_owner",
            Pattern::OwnershipStale => "ownership_stale",
        }
    }

    /// Family prefix: `conway`, `bcm` or `ownership`.
    pub fn family(self) -> &'static str {
        let name = self.name();
        &name[..name.find('_').unwrap_or(name.len())]
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered most severe first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Alert,
    Warning,
    Info,
}

/// Window a finding refers to. Ownership findings span the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FindingWindow {
    Span(Window),
    All,
}

impl Serialize for FindingWindow {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            FindingWindow::Span(w) => w.serialize(serializer),
            FindingWindow::All => serializer.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for FindingWindow {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Tag(String),
            Span(Window),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Span(w) => Ok(FindingWindow::Span(w)),
            Repr::Tag(s) if s == "all" => Ok(FindingWindow::All),
            Repr::Tag(s) => Err(de::Error::custom(format!(
                "expected \"all\" or a window object, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementReason {
    CoAssignment,
    CrossDependency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    MissingLink {
        reasons: Vec<RequirementReason>,
        via: Vec<ComponentId>,
        observed_weight: u64,
    },
    WeakLink {
        reasons: Vec<RequirementReason>,
        via: Vec<ComponentId>,
        weight: u64,
        window_max: u64,
    },
    UnexpectedCentral {
        rank: usize,
        value: f64,
        expected: Vec<ActorId>,
    },
    ExpectedPeripheral {
        rank: usize,
        value: f64,
        ranked: usize,
        cutoff_rank: usize,
    },
    MultiOwner {
        actors: Vec<ActorId>,
        counts: BTreeMap<ActorId, usize>,
    },
    Stale {
        last_change: DateTime<Utc>,
        idle_days: i64,
        stable: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub pattern: Pattern,
    pub window: FindingWindow,
    pub actors: Vec<ActorId>,
    pub components_or_modules: Vec<String>,
    pub evidence: Evidence,
    pub severity: Severity,
}

impl Finding {
    /// Builds a finding with `actors` and `components_or_modules` sorted.
    pub fn new(
        pattern: Pattern,
        window: FindingWindow,
        mut actors: Vec<ActorId>,
        mut components_or_modules: Vec<String>,
        evidence: Evidence,
        severity: Severity,
    ) -> Self {
        actors.sort();
        actors.dedup();
        components_or_modules.sort();
        components_or_modules.dedup();
        Self {
            pattern,
            window,
            actors,
            components_or_modules,
            evidence,
            severity,
        }
    }

    pub fn names_actors(&self, ids: &[&str]) -> bool {
        let mut want: Vec<&str> = ids.to_vec();
        want.sort_unstable();
        self.actors.iter().map(ActorId::as_str).eq(want)
    }
}
