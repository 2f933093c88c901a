//! Behavior library: named action and perception behaviors with their
//! semantic tags, executable bindings and fused conditions.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::bt::{Node, NodeId, NodeKind, Params, TickStatus};
use crate::sim::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BehaviorKind {
    Action,
    Perception,
}

impl BehaviorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorKind::Action => "action",
            BehaviorKind::Perception => "perception",
        }
    }
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BehaviorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "action" => Ok(BehaviorKind::Action),
            "perception" => Ok(BehaviorKind::Perception),
            other => Err(format!("unknown behavior kind {other:?}")),
        }
    }
}

/// A behavior's name, type and natural-language description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorTag {
    pub name: String,
    pub kind: BehaviorKind,
    pub tag: String,
}

impl BehaviorTag {
    pub fn new(name: impl Into<String>, kind: BehaviorKind, tag: impl Into<String>) -> Self {
        BehaviorTag {
            name: name.into(),
            kind,
            tag: tag.into(),
        }
    }
}

/// What a perception behavior observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reading {
    Scalar(f64),
    Flag(bool),
    /// `None` when the detector saw nothing.
    Pose(Option<Pose>),
}

impl Reading {
    /// Status of a perception behavior used directly as a condition leaf.
    pub fn status(&self) -> TickStatus {
        match self {
            Reading::Scalar(_) | Reading::Flag(true) | Reading::Pose(Some(_)) => TickStatus::Success,
            Reading::Flag(false) | Reading::Pose(None) => TickStatus::Failure,
        }
    }
}

impl fmt::Display for Reading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reading::Scalar(v) => write!(f, "{v}"),
            Reading::Flag(b) => f.write_str(if *b { "yes" } else { "no" }),
            Reading::Pose(Some(p)) => write!(f, "{p}"),
            Reading::Pose(None) => f.write_str("miss"),
        }
    }
}

/// A perception behavior could not produce a reading.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct SensorError(pub String);

/// Result of running an action behavior for one tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub status: TickStatus,
    pub detail: String,
}

impl Outcome {
    pub fn new(status: TickStatus, detail: impl Into<String>) -> Self {
        Outcome {
            status,
            detail: detail.into(),
        }
    }
}

pub type ActionFn<W> = Box<dyn Fn(&Params, &mut W) -> Outcome + Send + Sync>;
pub type PerceptionFn<W> = Box<dyn Fn(&Params, &W) -> Result<Reading, SensorError> + Send + Sync>;

/// Behavior code. Perception bindings only get shared access to the world.
pub enum Executable<W> {
    Action(ActionFn<W>),
    Perception(PerceptionFn<W>),
}

impl<W> Executable<W> {
    pub fn action(f: impl Fn(&Params, &mut W) -> Outcome + Send + Sync + 'static) -> Self {
        Executable::Action(Box::new(f))
    }

    pub fn perception(f: impl Fn(&Params, &W) -> Result<Reading, SensorError> + Send + Sync + 'static) -> Self {
        Executable::Perception(Box::new(f))
    }

    pub fn kind(&self) -> BehaviorKind {
        match self {
            Executable::Action(_) => BehaviorKind::Action,
            Executable::Perception(_) => BehaviorKind::Perception,
        }
    }
}

pub struct BehaviorBinding<W> {
    pub tag: BehaviorTag,
    pub executable: Executable<W>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Fusion {
    #[default]
    All,
    Any,
}

pub type ArgsFn = Box<dyn Fn(&Params) -> Params + Send + Sync>;
pub type PredicateFn = Box<dyn Fn(&Reading) -> bool + Send + Sync>;

/// One perception behavior feeding a fused condition.
pub struct ConditionMember {
    pub behavior: String,
    /// Human-readable predicate, e.g. `torque > 0.1`.
    pub description: String,
    args: ArgsFn,
    predicate: PredicateFn,
}

impl ConditionMember {
    /// Member that receives the condition leaf's params unchanged.
    pub fn new(
        behavior: impl Into<String>,
        description: impl Into<String>,
        predicate: impl Fn(&Reading) -> bool + Send + Sync + 'static,
    ) -> Self {
        ConditionMember {
            behavior: behavior.into(),
            description: description.into(),
            args: Box::new(Params::clone),
            predicate: Box::new(predicate),
        }
    }

    /// Derives the member's params from the condition leaf's params.
    pub fn with_args(mut self, args: impl Fn(&Params) -> Params + Send + Sync + 'static) -> Self {
        self.args = Box::new(args);
        self
    }
}

pub struct ConditionSpec {
    pub name: String,
    pub members: Vec<ConditionMember>,
    pub fusion: Fusion,
    /// Shown to the planner.
    pub description: String,
}

impl ConditionSpec {
    pub fn new(name: impl Into<String>, description: impl Into<String>, members: Vec<ConditionMember>) -> Self {
        ConditionSpec {
            name: name.into(),
            members,
            fusion: Fusion::All,
            description: description.into(),
        }
    }

    pub fn fusion(mut self, fusion: Fusion) -> Self {
        self.fusion = fusion;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("duplicate name {0}: already registered")]
    Duplicate(String),
    #[error("invalid behavior name {0:?}")]
    InvalidName(String),
    #[error("behavior {0} has an empty tag")]
    EmptyTag(String),
    #[error("behavior {name} is tagged {tagged} but bound to {bound} code")]
    KindMismatch {
        name: String,
        tagged: BehaviorKind,
        bound: BehaviorKind,
    },
    #[error("condition {0} has no members")]
    EmptyCondition(String),
    #[error("condition {condition}: member {member} {reason}")]
    BadMember {
        condition: String,
        member: String,
        reason: String,
    },
}

/// How a leaf name resolves in a library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafClass {
    Behavior(BehaviorKind),
    Condition,
}

/// The behavior lib. Immutable after registration; share it by reference.
pub struct BehaviorLibrary<W> {
    entries: BTreeMap<String, BehaviorBinding<W>>,
    conditions: BTreeMap<String, ConditionSpec>,
}

impl<W> Default for BehaviorLibrary<W> {
    fn default() -> Self {
        BehaviorLibrary {
            entries: BTreeMap::new(),
            conditions: BTreeMap::new(),
        }
    }
}

impl<W> fmt::Debug for BehaviorLibrary<W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BehaviorLibrary")
            .field("behaviors", &self.entries.keys().collect::<Vec<_>>())
            .field("conditions", &self.conditions.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn valid_name(name: &str) -> bool {
    !name.trim().is_empty() && name.trim() == name && !name.contains(['|', '\n', '\r'])
}

impl<W> BehaviorLibrary<W> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, tag: BehaviorTag, executable: Executable<W>) -> Result<(), RegistryError> {
        if !valid_name(&tag.name) {
            return Err(RegistryError::InvalidName(tag.name));
        }
        if tag.tag.trim().is_empty() || tag.tag.contains(['\n', '\r']) {
            return Err(RegistryError::EmptyTag(tag.name));
        }
        if self.entries.contains_key(&tag.name) || self.conditions.contains_key(&tag.name) {
            return Err(RegistryError::Duplicate(tag.name));
        }
        if tag.kind != executable.kind() {
            return Err(RegistryError::KindMismatch {
                name: tag.name,
                tagged: tag.kind,
                bound: executable.kind(),
            });
        }
        self.entries
            .insert(tag.name.clone(), BehaviorBinding { tag, executable });
        Ok(())
    }

    /// Registers a fused condition. Every member must already be registered
    /// as a perception behavior.
    pub fn register_condition(&mut self, spec: ConditionSpec) -> Result<(), RegistryError> {
        if !valid_name(&spec.name) {
            return Err(RegistryError::InvalidName(spec.name));
        }
        if self.entries.contains_key(&spec.name) || self.conditions.contains_key(&spec.name) {
            return Err(RegistryError::Duplicate(spec.name));
        }
        if spec.members.is_empty() {
            return Err(RegistryError::EmptyCondition(spec.name));
        }
        for member in &spec.members {
            let reason = match self.entries.get(&member.behavior) {
                None => "is not registered",
                Some(b) if b.tag.kind != BehaviorKind::Perception => "is not a perception behavior",
                Some(_) => continue,
            };
            return Err(RegistryError::BadMember {
                condition: spec.name.clone(),
                member: member.behavior.clone(),
                reason: reason.into(),
            });
        }
        self.conditions.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&BehaviorBinding<W>> {
        self.entries.get(name)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionSpec> {
        self.conditions.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tags(&self) -> impl Iterator<Item = &BehaviorTag> {
        self.entries.values().map(|b| &b.tag)
    }

    pub fn conditions(&self) -> impl Iterator<Item = &ConditionSpec> {
        self.conditions.values()
    }

    pub fn classify(&self, name: &str) -> Option<LeafClass> {
        if let Some(b) = self.entries.get(name) {
            Some(LeafClass::Behavior(b.tag.kind))
        } else if self.conditions.contains_key(name) {
            Some(LeafClass::Condition)
        } else {
            None
        }
    }

    /// Whether a condition leaf with this name verifies that an object is held.
    pub fn is_held_check(&self, name: &str) -> bool {
        const HELD_SENSORS: [&str; 2] = ["GripForce", "VisualQA"];
        match self.conditions.get(name) {
            Some(spec) => spec.members.iter().any(|m| HELD_SENSORS.contains(&m.behavior.as_str())),
            None => HELD_SENSORS.contains(&name),
        }
    }

    /// One `name | kind | tag` line per behavior under a header; actions
    /// first, then perceptions, each alphabetical.
    pub fn tags_prompt_block(&self) -> String {
        let mut tags: Vec<&BehaviorTag> = self.tags().collect();
        tags.sort_by(|a, b| (a.kind, &a.name).cmp(&(b.kind, &b.name)));
        let mut out = String::from("name | kind | tag\n");
        for t in tags {
            out.push_str(&format!("{} | {} | {}\n", t.name, t.kind, t.tag));
        }
        out
    }
}

/// What the executor needs from a world besides the behavior bindings.
pub trait World {
    /// Simulation step counter, recorded in trace events.
    fn step_index(&self) -> u64;
    /// Canonical text record of the current state.
    fn snapshot(&self) -> String;
}

/// Per-member detail from a condition evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEval {
    pub status: TickStatus,
    pub detail: String,
}

/// Runs every member of a fused condition and combines their predicates.
/// Never returns Running. Unavailable members yield Failure.
pub fn evaluate_condition<W>(library: &BehaviorLibrary<W>, name: &str, params: &Params, world: &W) -> TickStatus {
    evaluate_condition_detailed(library, name, params, world).status
}

pub fn evaluate_condition_detailed<W>(
    library: &BehaviorLibrary<W>,
    name: &str,
    params: &Params,
    world: &W,
) -> ConditionEval {
    let Some(spec) = library.conditions.get(name) else {
        log::warn!("condition {name} is not registered");
        return ConditionEval {
            status: TickStatus::Failure,
            detail: format!("condition {name} is not registered"),
        };
    };
    let mut unavailable = false;
    let mut holds = Vec::with_capacity(spec.members.len());
    let mut parts = Vec::with_capacity(spec.members.len());
    for member in &spec.members {
        let args = (member.args)(params);
        let reading = match library.entries.get(&member.behavior).map(|b| &b.executable) {
            Some(Executable::Perception(f)) => f(&args, world),
            _ => Err(SensorError(format!("{} unavailable", member.behavior))),
        };
        match reading {
            Ok(r) => {
                let ok = (member.predicate)(&r);
                parts.push(format!("{}={r}", member.behavior));
                holds.push(ok);
            }
            Err(e) => {
                log::warn!("condition {name}: {} unavailable: {e}", member.behavior);
                parts.push(format!("{}=unavailable({e})", member.behavior));
                unavailable = true;
            }
        }
    }
    let pass = !unavailable
        && match spec.fusion {
            Fusion::All => holds.iter().all(|&h| h),
            Fusion::Any => holds.iter().any(|&h| h),
        };
    ConditionEval {
        status: if pass { TickStatus::Success } else { TickStatus::Failure },
        detail: parts.join(" "),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Action,
    Condition,
}

impl LeafKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LeafKind::Action => "action",
            LeafKind::Condition => "condition",
        }
    }
}

/// One leaf dispatch, as recorded in the execution trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchRecord {
    pub node: NodeId,
    pub leaf: LeafKind,
    pub behavior: String,
    pub params: Params,
    pub status: TickStatus,
    /// World step counter after the dispatch.
    pub world_step: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("node {0} is not a leaf")]
    NotALeaf(NodeId),
    #[error("no behavior or condition named {0}")]
    Unresolved(String),
    #[error("{name} is {found}, which a {leaf} leaf cannot invoke")]
    KindMismatch {
        name: String,
        leaf: &'static str,
        found: &'static str,
    },
}

/// Executes one leaf against the world and appends a trace record.
pub fn dispatch<W: World>(
    library: &BehaviorLibrary<W>,
    leaf: &Node,
    world: &mut W,
    trace: &mut Vec<DispatchRecord>,
) -> Result<TickStatus, DispatchError> {
    let (leaf_kind, name, params) = match &leaf.kind {
        NodeKind::Action { behavior, params } => (LeafKind::Action, behavior, params),
        NodeKind::Condition { condition, params } => (LeafKind::Condition, condition, params),
        _ => return Err(DispatchError::NotALeaf(leaf.id)),
    };
    let (status, detail) = match (leaf_kind, library.classify(name)) {
        (_, None) => return Err(DispatchError::Unresolved(name.clone())),
        (LeafKind::Action, Some(LeafClass::Behavior(BehaviorKind::Action))) => {
            let Some(Executable::Action(f)) = library.lookup(name).map(|b| &b.executable) else {
                unreachable!("classified as action");
            };
            let out = f(params, world);
            (out.status, out.detail)
        }
        (LeafKind::Action, Some(other)) => {
            return Err(DispatchError::KindMismatch {
                name: name.clone(),
                leaf: "Action",
                found: match other {
                    LeafClass::Condition => "a condition",
                    _ => "a perception behavior",
                },
            })
        }
        (LeafKind::Condition, Some(LeafClass::Condition)) => {
            let eval = evaluate_condition_detailed(library, name, params, world);
            (eval.status, eval.detail)
        }
        (LeafKind::Condition, Some(LeafClass::Behavior(BehaviorKind::Perception))) => {
            let Some(Executable::Perception(f)) = library.lookup(name).map(|b| &b.executable) else {
                unreachable!("classified as perception");
            };
            match f(params, world) {
                Ok(r) => (r.status(), format!("{name}={r}")),
                Err(e) => {
                    log::warn!("perception {name} unavailable: {e}");
                    (TickStatus::Failure, format!("{name}=unavailable({e})"))
                }
            }
        }
        (LeafKind::Condition, Some(LeafClass::Behavior(BehaviorKind::Action))) => {
            return Err(DispatchError::KindMismatch {
                name: name.clone(),
                leaf: "Condition",
                found: "an action behavior",
            })
        }
    };
    trace.push(DispatchRecord {
        node: leaf.id,
        leaf: leaf_kind,
        behavior: name.clone(),
        params: params.clone(),
        status,
        world_step: world.step_index(),
        detail,
    });
    Ok(status)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("manifest line {line}: expected name|kind|tag")]
    Shape { line: usize },
    #[error("manifest line {line}: {message}")]
    Field { line: usize, message: String },
}

/// Parses a library manifest: one `name|kind|tag` per line, `#` comments.
pub fn parse_manifest(text: &str) -> Result<Vec<BehaviorTag>, ManifestError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.splitn(3, '|');
        let (Some(name), Some(kind), Some(tag)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ManifestError::Shape { line });
        };
        let kind = kind
            .parse::<BehaviorKind>()
            .map_err(|message| ManifestError::Field { line, message })?;
        out.push(BehaviorTag::new(name.trim(), kind, tag.trim()));
    }
    Ok(out)
}

pub fn write_manifest<'a>(tags: impl IntoIterator<Item = &'a BehaviorTag>) -> String {
    tags.into_iter()
        .map(|t| format!("{}|{}|{}\n", t.name, t.kind, t.tag))
        .collect()
}
