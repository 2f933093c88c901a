use thiserror::Error;

use super::{Node, NodeId, NodeKind, TaskGraph, TickStatus};

/// Per-node interpreter memory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeMemory {
    /// Child to resume at on the next tick (Sequence / Fallback).
    pub resume_child: usize,
    /// Failed attempts since the last reset (Retry).
    pub attempts_used: u32,
}

/// Interpreter bookkeeping for one execution of one graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunState {
    memory: Vec<NodeMemory>,
    last_status: Option<TickStatus>,
}

impl RunState {
    pub fn new(graph: &TaskGraph) -> Self {
        RunState {
            memory: vec![NodeMemory::default(); graph.len()],
            last_status: None,
        }
    }

    pub fn memory(&self, id: NodeId) -> Option<&NodeMemory> {
        self.memory.get(id.0)
    }

    pub fn last_status(&self) -> Option<TickStatus> {
        self.last_status
    }
}

#[derive(Debug, Error)]
pub enum TickError<E> {
    #[error("interpreter state inconsistent with graph: {0}")]
    Inconsistent(String),
    #[error("dispatch of node {node} failed: {source}")]
    Dispatch { node: NodeId, source: E },
}

/// Ticks the graph once from the root.
///
/// Sequence and Fallback keep memory: a child that returned Running is
/// resumed directly on the next tick. Retry returns Running between
/// attempts and allows at most `max_attempts` executions of its child.
pub fn tick<E, F>(graph: &TaskGraph, state: &mut RunState, dispatch: &mut F) -> Result<TickStatus, TickError<E>>
where
    F: FnMut(&Node) -> Result<TickStatus, E>,
{
    if state.memory.len() != graph.len() {
        return Err(TickError::Inconsistent(format!(
            "state tracks {} nodes, graph has {}",
            state.memory.len(),
            graph.len()
        )));
    }
    let status = tick_node(graph, state, graph.root, 0, dispatch)?;
    state.last_status = Some(status);
    Ok(status)
}

fn tick_node<E, F>(
    graph: &TaskGraph,
    state: &mut RunState,
    id: NodeId,
    depth: usize,
    dispatch: &mut F,
) -> Result<TickStatus, TickError<E>>
where
    F: FnMut(&Node) -> Result<TickStatus, E>,
{
    if depth > graph.len() {
        return Err(TickError::Inconsistent("cycle detected".into()));
    }
    let node = graph
        .node(id)
        .ok_or_else(|| TickError::Inconsistent(format!("unknown node {id}")))?;

    match &node.kind {
        NodeKind::Action { .. } | NodeKind::Condition { .. } => {
            dispatch(node).map_err(|source| TickError::Dispatch { node: id, source })
        }
        NodeKind::Sequence | NodeKind::Fallback => {
            // Sequence stops on the first non-Success, Fallback on the first non-Failure.
            let pass = if node.kind == NodeKind::Sequence {
                TickStatus::Success
            } else {
                TickStatus::Failure
            };
            let start = state.memory[id.0].resume_child;
            if start >= node.children.len() {
                return Err(TickError::Inconsistent(format!(
                    "resume index {start} out of range for node {id}"
                )));
            }
            for (k, &child) in node.children.iter().enumerate().skip(start) {
                let status = tick_node(graph, state, child, depth + 1, dispatch)?;
                if status == TickStatus::Running {
                    state.memory[id.0].resume_child = k;
                    return Ok(TickStatus::Running);
                }
                if status != pass {
                    state.memory[id.0].resume_child = 0;
                    return Ok(status);
                }
            }
            state.memory[id.0].resume_child = 0;
            Ok(pass)
        }
        NodeKind::Retry { max_attempts } => {
            let child = *node
                .children
                .first()
                .ok_or_else(|| TickError::Inconsistent(format!("retry {id} has no child")))?;
            match tick_node(graph, state, child, depth + 1, dispatch)? {
                TickStatus::Running => Ok(TickStatus::Running),
                TickStatus::Success => {
                    state.memory[id.0].attempts_used = 0;
                    Ok(TickStatus::Success)
                }
                TickStatus::Failure => {
                    reset_subtree(graph, state, child);
                    let used = state.memory[id.0].attempts_used + 1;
                    if used < *max_attempts {
                        state.memory[id.0].attempts_used = used;
                        Ok(TickStatus::Running)
                    } else {
                        state.memory[id.0].attempts_used = 0;
                        Ok(TickStatus::Failure)
                    }
                }
            }
        }
    }
}

fn reset_subtree(graph: &TaskGraph, state: &mut RunState, id: NodeId) {
    let mut stack = vec![id];
    let mut visited = 0;
    while let Some(n) = stack.pop() {
        visited += 1;
        if visited > graph.len() {
            break;
        }
        if let Some(mem) = state.memory.get_mut(n.0) {
            *mem = NodeMemory::default();
        }
        if let Some(node) = graph.node(n) {
            stack.extend(node.children.iter().copied());
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::convert::Infallible;

    use super::*;
    use crate::bt::Tree;

    /// Runs `ticks` ticks, each leaf consuming its script in order (last entry repeats).
    fn scripted(
        graph: &TaskGraph,
        scripts: &HashMap<&str, Vec<TickStatus>>,
        ticks: usize,
    ) -> (Vec<TickStatus>, Vec<String>) {
        let mut state = RunState::new(graph);
        let mut cursor: HashMap<String, usize> = HashMap::new();
        let mut calls = Vec::new();
        let mut out = Vec::new();
        for _ in 0..ticks {
            let status = tick(graph, &mut state, &mut |node: &Node| -> Result<_, Infallible> {
                let name = node.kind.leaf_name().unwrap().to_string();
                let script = &scripts[name.as_str()];
                let i = cursor.entry(name.clone()).or_insert(0);
                let s = script[(*i).min(script.len() - 1)];
                *i += 1;
                calls.push(name);
                Ok(s)
            })
            .unwrap();
            out.push(status);
        }
        (out, calls)
    }

    use TickStatus::*;

    #[test]
    fn sequence_all_success() {
        let g = TaskGraph::new("t", Tree::sequence(vec![Tree::action("a"), Tree::action("b")]));
        let scripts = HashMap::from([("a", vec![Success]), ("b", vec![Success])]);
        assert_eq!(scripted(&g, &scripts, 1).0, [Success]);
    }

    #[test]
    fn sequence_resumes_running_child() {
        let g = TaskGraph::new("t", Tree::sequence(vec![Tree::action("a"), Tree::action("b")]));
        let scripts = HashMap::from([("a", vec![Success]), ("b", vec![Running, Success])]);
        let (statuses, calls) = scripted(&g, &scripts, 2);
        assert_eq!(statuses, [Running, Success]);
        assert_eq!(calls, ["a", "b", "b"]);
    }

    #[test]
    fn fallback_mirrors_sequence() {
        let g = TaskGraph::new("t", Tree::fallback(vec![Tree::action("a"), Tree::action("b")]));
        let scripts = HashMap::from([("a", vec![Failure]), ("b", vec![Success])]);
        assert_eq!(scripted(&g, &scripts, 1).0, [Success]);
        let scripts = HashMap::from([("a", vec![Failure]), ("b", vec![Failure])]);
        assert_eq!(scripted(&g, &scripts, 1).0, [Failure]);
        let scripts = HashMap::from([("a", vec![Success]), ("b", vec![Failure])]);
        let (s, calls) = scripted(&g, &scripts, 1);
        assert_eq!((s, calls), (vec![Success], vec!["a".to_string()]));
    }

    #[test]
    fn retry_failure_then_success() {
        let g = TaskGraph::new("t", Tree::retry(2, Tree::action("a")));
        let scripts = HashMap::from([("a", vec![Failure, Success])]);
        assert_eq!(scripted(&g, &scripts, 2).0, [Running, Success]);
    }

    #[test]
    fn retry_exhaustion_bounds_dispatches() {
        let g = TaskGraph::new("t", Tree::retry(3, Tree::action("a")));
        let scripts = HashMap::from([("a", vec![Failure])]);
        let (statuses, calls) = scripted(&g, &scripts, 3);
        assert_eq!(statuses, [Running, Running, Failure]);
        assert_eq!(calls.len(), 3);
    }

    #[test]
    fn retry_resets_child_memory() {
        // a succeeds, b fails: the retried sequence restarts at a.
        let g = TaskGraph::new(
            "t",
            Tree::retry(2, Tree::sequence(vec![Tree::action("a"), Tree::action("b")])),
        );
        let scripts = HashMap::from([("a", vec![Success]), ("b", vec![Running, Failure, Success])]);
        let (statuses, calls) = scripted(&g, &scripts, 3);
        assert_eq!(statuses, [Running, Running, Success]);
        assert_eq!(calls, ["a", "b", "b", "a", "b"]);
    }

    #[test]
    fn mismatched_state_is_inconsistent() {
        let g = TaskGraph::new("t", Tree::action("a"));
        let other = TaskGraph::new("t", Tree::sequence(vec![Tree::action("a")]));
        let mut state = RunState::new(&other);
        let err = tick(&g, &mut state, &mut |_: &Node| -> Result<_, Infallible> { Ok(Success) }).unwrap_err();
        assert!(matches!(err, TickError::Inconsistent(_)));
    }

    #[test]
    fn dispatch_fault_is_not_failure() {
        let g = TaskGraph::new("t", Tree::action("a"));
        let mut state = RunState::new(&g);
        let err = tick(&g, &mut state, &mut |_: &Node| Err("boom")).unwrap_err();
        assert!(matches!(
            err,
            TickError::Dispatch {
                node: NodeId(0),
                source: "boom"
            }
        ));
    }
}
