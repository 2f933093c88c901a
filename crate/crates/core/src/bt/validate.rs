use std::fmt;

use super::{NodeId, NodeKind, TaskGraph};
use crate::registry::{BehaviorKind, BehaviorLibrary, LeafClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub severity: Severity,
    pub node: Option<NodeId>,
    pub message: String,
}

impl Issue {
    fn error(node: Option<NodeId>, message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Error,
            node,
            message: message.into(),
        }
    }

    fn warning(node: Option<NodeId>, message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Warning,
            node,
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(n) => write!(f, "{} (node {n}): {}", self.severity, self.message),
            None => write!(f, "{}: {}", self.severity, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn from_issues(issues: Vec<Issue>) -> Self {
        let ok = !issues.iter().any(|i| i.severity == Severity::Error);
        ValidationReport { ok, issues }
    }

    /// A failed report carrying a single graph-level error.
    pub fn single_error(message: impl Into<String>) -> Self {
        Self::from_issues(vec![Issue::error(None, message)])
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "- {issue}")?;
        }
        Ok(())
    }
}

/// Structural checks only: single rooted tree, arity rules, well-formed
/// names and parameters.
pub fn validate_structure(graph: &TaskGraph) -> Vec<Issue> {
    let mut issues = Vec::new();
    let nodes = graph.nodes();
    if nodes.is_empty() {
        issues.push(Issue::error(None, "graph has no nodes"));
        return issues;
    }
    if !is_xml_text(&graph.name) {
        issues.push(Issue::error(
            None,
            "graph name contains characters not representable in XML",
        ));
    }
    for (i, node) in nodes.iter().enumerate() {
        if node.id.0 != i {
            issues.push(Issue::error(
                Some(NodeId(i)),
                format!("node stored at {i} carries id {}", node.id),
            ));
        }
    }
    if graph.root.0 >= nodes.len() {
        issues.push(Issue::error(None, format!("root {} does not exist", graph.root)));
        return issues;
    }

    // Every node must be reached exactly once from the root.
    let mut parents = vec![0usize; nodes.len()];
    let mut stack = vec![graph.root];
    let mut seen = vec![false; nodes.len()];
    while let Some(id) = stack.pop() {
        if seen[id.0] {
            continue;
        }
        seen[id.0] = true;
        for &child in &nodes[id.0].children {
            if child.0 >= nodes.len() {
                issues.push(Issue::error(Some(id), format!("child {child} does not exist")));
                continue;
            }
            parents[child.0] += 1;
            if child == graph.root {
                issues.push(Issue::error(Some(id), "root appears as a child (cycle)"));
            } else if parents[child.0] > 1 {
                issues.push(Issue::error(Some(child), "node has more than one parent"));
            }
            stack.push(child);
        }
    }
    for (i, reached) in seen.iter().enumerate() {
        if !reached {
            issues.push(Issue::error(Some(NodeId(i)), "node is not reachable from the root"));
        }
    }

    for node in nodes {
        let id = Some(node.id);
        let n = node.children.len();
        match &node.kind {
            NodeKind::Sequence | NodeKind::Fallback if n == 0 => {
                issues.push(Issue::error(
                    id,
                    format!("{} requires at least one child", node.kind.element()),
                ));
            }
            NodeKind::Retry { max_attempts } => {
                if *max_attempts == 0 {
                    issues.push(Issue::error(id, "Retry requires num_attempts >= 1"));
                }
                if n != 1 {
                    issues.push(Issue::error(id, format!("Retry requires exactly one child, has {n}")));
                }
            }
            NodeKind::Action { behavior: name, params }
            | NodeKind::Condition {
                condition: name,
                params,
            } => {
                if n != 0 {
                    issues.push(Issue::error(
                        id,
                        format!("{} is a leaf and cannot have children", node.kind.element()),
                    ));
                }
                if name.trim().is_empty() {
                    issues.push(Issue::error(id, "leaf name is empty"));
                } else if !is_xml_text(name) {
                    issues.push(Issue::error(
                        id,
                        "leaf name contains characters not representable in XML",
                    ));
                }
                for (key, value) in params.iter() {
                    if key == "name" || key == "num_attempts" {
                        issues.push(Issue::error(id, format!("parameter key {key:?} is reserved")));
                    } else if !is_xml_name(key) {
                        issues.push(Issue::error(
                            id,
                            format!("parameter key {key:?} is not a valid XML name"),
                        ));
                    }
                    if !is_xml_text(value) {
                        issues.push(Issue::error(
                            id,
                            format!("parameter {key} contains characters not representable in XML"),
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    issues
}

/// Full executability check of a graph against a behavior library.
pub fn validate<W>(graph: &TaskGraph, library: &BehaviorLibrary<W>) -> ValidationReport {
    let mut issues = validate_structure(graph);
    if issues.iter().any(|i| i.severity == Severity::Error) {
        return ValidationReport::from_issues(issues);
    }

    let order = graph.leaves();
    for node in &order {
        let id = Some(node.id);
        match &node.kind {
            NodeKind::Action { behavior, .. } => match library.classify(behavior) {
                None => issues.push(Issue::error(id, format!("unknown behavior {behavior}"))),
                Some(LeafClass::Behavior(BehaviorKind::Action)) => {}
                Some(LeafClass::Behavior(BehaviorKind::Perception)) => issues.push(Issue::error(
                    id,
                    format!("{behavior} is a perception, not an action; use a Condition node"),
                )),
                Some(LeafClass::Condition) => {
                    issues.push(Issue::error(id, format!("{behavior} is a condition, not an action")))
                }
            },
            NodeKind::Condition { condition, .. } => match library.classify(condition) {
                None => issues.push(Issue::error(id, format!("unknown condition {condition}"))),
                Some(LeafClass::Behavior(BehaviorKind::Action)) => {
                    issues.push(Issue::error(id, format!("{condition} is an action, not a condition")))
                }
                Some(_) => {}
            },
            _ => {}
        }
    }

    // A grasp should be followed somewhere later by a check that the object is held.
    for (i, node) in order.iter().enumerate() {
        if node.kind.leaf_name() == Some("Grasp") && matches!(node.kind, NodeKind::Action { .. }) {
            let checked = order[i + 1..].iter().any(|later| {
                matches!(&later.kind, NodeKind::Condition { condition, .. } if library.is_held_check(condition))
            });
            if !checked {
                issues.push(Issue::warning(
                    Some(node.id),
                    "Grasp is not followed by a held-object check; a slipped grasp will go unnoticed",
                ));
            }
        }
    }

    for node in graph.nodes() {
        if let NodeKind::Retry { .. } = node.kind {
            let perception_only = subtree_leaves(graph, node.id).iter().all(|leaf| match &leaf.kind {
                NodeKind::Condition { .. } => true,
                NodeKind::Action { behavior, .. } => {
                    library.classify(behavior) != Some(LeafClass::Behavior(BehaviorKind::Action))
                }
                _ => false,
            });
            if perception_only {
                issues.push(Issue::warning(
                    Some(node.id),
                    "Retry wraps only perception; retrying cannot change the world",
                ));
            }
        }
    }

    ValidationReport::from_issues(issues)
}

fn subtree_leaves(graph: &TaskGraph, id: NodeId) -> Vec<&super::Node> {
    let mut out = Vec::new();
    let mut stack = vec![id];
    while let Some(n) = stack.pop() {
        if let Some(node) = graph.node(n) {
            if node.kind.is_leaf() {
                out.push(node);
            }
            stack.extend(node.children.iter().copied());
        }
    }
    out
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..)
}

fn is_xml_text(s: &str) -> bool {
    s.chars().all(is_xml_char)
}

/// Conservative XML name check: ASCII letter or `_` first, then letters,
/// digits, `_`, `-`, `.`.
pub(crate) fn is_xml_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}
