//! Behavior-tree data model.
//!
//! A [`TaskGraph`] is an arena of [`Node`]s addressed by [`NodeId`]. Graphs
//! built through [`Tree`] or parsed from XML always number their nodes in
//! pre-order, so structurally equal trees compare equal.

mod tick;
mod validate;
mod xml;

use std::collections::BTreeMap;
use std::fmt;

pub use tick::{tick, NodeMemory, RunState, TickError};
pub use validate::{validate, validate_structure, Issue, Severity, ValidationReport};
pub use xml::{escape_text, parse_xml, serialize, ParseError, SerializeError};

/// Three-valued status returned by every node on every tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TickStatus {
    Success,
    Failure,
    Running,
}

impl TickStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TickStatus::Success => "success",
            TickStatus::Failure => "failure",
            TickStatus::Running => "running",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "success" => Some(TickStatus::Success),
            "failure" => Some(TickStatus::Failure),
            "running" => Some(TickStatus::Running),
            _ => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        self != TickStatus::Running
    }
}

impl fmt::Display for TickStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Leaf parameters. Values are kept as text exactly as they appear in the
/// XML attribute; behaviors interpret them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Params(BTreeMap<String, String>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.0.insert(key.into(), value.into());
        self
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) -> Option<String> {
        self.0.insert(key.into(), value.into())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// `None` when absent, `Some(Err)` when present but not a finite number.
    pub fn get_f64(&self, key: &str) -> Option<Result<f64, String>> {
        self.get(key).map(|raw| match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("parameter {key}={raw:?} is not a finite number")),
        })
    }

    /// Iterates in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Params {
    /// `k=v;k=v` in key order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Params {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Params(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Sequence,
    Fallback,
    Retry { max_attempts: u32 },
    Action { behavior: String, params: Params },
    Condition { condition: String, params: Params },
}

impl NodeKind {
    /// XML element name.
    pub fn element(&self) -> &'static str {
        match self {
            NodeKind::Sequence => "Sequence",
            NodeKind::Fallback => "Fallback",
            NodeKind::Retry { .. } => "Retry",
            NodeKind::Action { .. } => "Action",
            NodeKind::Condition { .. } => "Condition",
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Action { .. } | NodeKind::Condition { .. })
    }

    /// Behavior or condition name for leaves.
    pub fn leaf_name(&self) -> Option<&str> {
        match self {
            NodeKind::Action { behavior, .. } => Some(behavior),
            NodeKind::Condition { condition, .. } => Some(condition),
            _ => None,
        }
    }

    pub fn leaf_params(&self) -> Option<&Params> {
        match self {
            NodeKind::Action { params, .. } | NodeKind::Condition { params, .. } => Some(params),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
}

/// A behavior tree plus its name; the planner's output and the executor's
/// input. Immutable once built and safe to share across executions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaskGraph {
    pub name: String,
    pub root: NodeId,
    nodes: Vec<Node>,
}

impl TaskGraph {
    /// Builds a graph from a nested tree description. Ids are assigned in
    /// pre-order starting at 0 for the root.
    pub fn new(name: impl Into<String>, tree: Tree) -> Self {
        let mut nodes = Vec::new();
        flatten(tree, &mut nodes);
        TaskGraph {
            name: name.into(),
            root: NodeId(0),
            nodes,
        }
    }

    /// Assembles a graph from raw parts without any checking. Use
    /// [`validate_structure`] before ticking a graph built this way.
    pub fn from_parts(name: impl Into<String>, root: NodeId, nodes: Vec<Node>) -> Self {
        TaskGraph {
            name: name.into(),
            root,
            nodes,
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0).filter(|n| n.id == id)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaves in tree (pre-order) order.
    pub fn leaves(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let Some(node) = self.node(id) else { continue };
            if node.kind.is_leaf() {
                out.push(node);
            }
            stack.extend(node.children.iter().rev().copied());
        }
        out
    }

    /// Converts back into the nested form.
    pub fn to_tree(&self) -> Option<Tree> {
        fn build(g: &TaskGraph, id: NodeId, depth: usize) -> Option<Tree> {
            if depth > g.len() {
                return None;
            }
            let node = g.node(id)?;
            let children = node
                .children
                .iter()
                .map(|&c| build(g, c, depth + 1))
                .collect::<Option<Vec<_>>>()?;
            Some(Tree {
                kind: node.kind.clone(),
                children,
            })
        }
        build(self, self.root, 0)
    }
}

fn flatten(tree: Tree, nodes: &mut Vec<Node>) -> NodeId {
    let id = NodeId(nodes.len());
    nodes.push(Node {
        id,
        kind: tree.kind,
        children: Vec::new(),
    });
    let children = tree.children.into_iter().map(|child| flatten(child, nodes)).collect();
    nodes[id.0].children = children;
    id
}

/// Nested tree description used to build graphs by hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub kind: NodeKind,
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn sequence(children: Vec<Tree>) -> Self {
        Tree {
            kind: NodeKind::Sequence,
            children,
        }
    }

    pub fn fallback(children: Vec<Tree>) -> Self {
        Tree {
            kind: NodeKind::Fallback,
            children,
        }
    }

    pub fn retry(max_attempts: u32, child: Tree) -> Self {
        Tree {
            kind: NodeKind::Retry { max_attempts },
            children: vec![child],
        }
    }

    pub fn action(behavior: impl Into<String>) -> Self {
        Tree {
            kind: NodeKind::Action {
                behavior: behavior.into(),
                params: Params::new(),
            },
            children: Vec::new(),
        }
    }

    pub fn condition(condition: impl Into<String>) -> Self {
        Tree {
            kind: NodeKind::Condition {
                condition: condition.into(),
                params: Params::new(),
            },
            children: Vec::new(),
        }
    }

    /// Adds a parameter to a leaf. No effect on control nodes.
    pub fn param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        if let NodeKind::Action { params, .. } | NodeKind::Condition { params, .. } = &mut self.kind {
            params.insert(key, value);
        }
        self
    }
}
