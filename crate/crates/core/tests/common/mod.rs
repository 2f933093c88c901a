//! Helpers shared by the integration tests: a reference behavior-tree
//! interpreter written independently of the library, random tree builders and
//! a scripted world.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use rand::Rng;
use taskgraph::bt::{TaskGraph, TickStatus, Tree};
use taskgraph::registry::{BehaviorKind, BehaviorLibrary, BehaviorTag, Executable, Outcome, World};

/// Tree with scripted leaves. A leaf returns `script[k % len]` on its k-th call.
#[derive(Debug, Clone)]
pub enum RefTree {
    Seq(Vec<RefTree>),
    Fb(Vec<RefTree>),
    Retry(u32, Box<RefTree>),
    Leaf { condition: bool, script: Vec<TickStatus> },
}

impl RefTree {
    pub fn depth(&self) -> usize {
        match self {
            RefTree::Seq(c) | RefTree::Fb(c) => 1 + c.iter().map(RefTree::depth).max().unwrap_or(0),
            RefTree::Retry(_, c) => 1 + c.depth(),
            RefTree::Leaf { .. } => 1,
        }
    }

    /// Library tree; leaf `i` (pre-order among all nodes) is named `L{i}`.
    pub fn to_tree(&self) -> Tree {
        fn go(t: &RefTree, next: &mut usize) -> Tree {
            let id = *next;
            *next += 1;
            match t {
                RefTree::Seq(c) => Tree::sequence(c.iter().map(|x| go(x, next)).collect()),
                RefTree::Fb(c) => Tree::fallback(c.iter().map(|x| go(x, next)).collect()),
                RefTree::Retry(k, c) => Tree::retry(*k, go(c, next)),
                RefTree::Leaf { condition: true, .. } => Tree::condition(format!("L{id}")),
                RefTree::Leaf { condition: false, .. } => Tree::action(format!("L{id}")),
            }
        }
        go(self, &mut 0)
    }

    pub fn graph(&self) -> TaskGraph {
        TaskGraph::new("scripted", self.to_tree())
    }

    /// Scripts keyed by pre-order node index.
    pub fn scripts(&self) -> HashMap<usize, Vec<TickStatus>> {
        let mut out = HashMap::new();
        let mut flat = Vec::new();
        flatten(self, &mut flat);
        for (i, n) in flat.iter().enumerate() {
            if let Flat::Leaf(s) = n {
                out.insert(i, s.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Flat {
    Seq(Vec<usize>),
    Fb(Vec<usize>),
    Retry(u32, usize),
    Leaf(Vec<TickStatus>),
}

fn flatten(t: &RefTree, out: &mut Vec<Flat>) -> usize {
    let me = out.len();
    out.push(Flat::Leaf(Vec::new()));
    let node = match t {
        RefTree::Seq(c) => Flat::Seq(c.iter().map(|x| flatten(x, out)).collect()),
        RefTree::Fb(c) => Flat::Fb(c.iter().map(|x| flatten(x, out)).collect()),
        RefTree::Retry(k, c) => Flat::Retry(*k, flatten(c, out)),
        RefTree::Leaf { script, .. } => Flat::Leaf(script.clone()),
    };
    out[me] = node;
    me
}

/// Direct transcription of the tick rules:
/// Sequence/Fallback resume at the child that last returned Running and
/// restart from the first child after any terminal result; Retry re-runs its
/// child after a Failure until it has been executed `k` times in total,
/// reporting Running in between.
pub struct RefInterp {
    nodes: Vec<Flat>,
    cursor: Vec<usize>,
    failures: Vec<u32>,
    calls: Vec<usize>,
    /// Pre-order indices of leaves in call order.
    pub log: Vec<usize>,
}

impl RefInterp {
    pub fn new(tree: &RefTree) -> Self {
        let mut nodes = Vec::new();
        flatten(tree, &mut nodes);
        let n = nodes.len();
        RefInterp {
            nodes,
            cursor: vec![0; n],
            failures: vec![0; n],
            calls: vec![0; n],
            log: Vec::new(),
        }
    }

    pub fn tick(&mut self) -> TickStatus {
        self.tick_node(0)
    }

    fn tick_node(&mut self, i: usize) -> TickStatus {
        use TickStatus::*;
        match self.nodes[i].clone() {
            Flat::Leaf(script) => {
                let s = script[self.calls[i] % script.len()];
                self.calls[i] += 1;
                self.log.push(i);
                s
            }
            Flat::Seq(children) => {
                while self.cursor[i] < children.len() {
                    match self.tick_node(children[self.cursor[i]]) {
                        Success => self.cursor[i] += 1,
                        Running => return Running,
                        Failure => {
                            self.cursor[i] = 0;
                            return Failure;
                        }
                    }
                }
                self.cursor[i] = 0;
                Success
            }
            Flat::Fb(children) => {
                while self.cursor[i] < children.len() {
                    match self.tick_node(children[self.cursor[i]]) {
                        Failure => self.cursor[i] += 1,
                        Running => return Running,
                        Success => {
                            self.cursor[i] = 0;
                            return Success;
                        }
                    }
                }
                self.cursor[i] = 0;
                Failure
            }
            Flat::Retry(k, child) => match self.tick_node(child) {
                Running => Running,
                Success => {
                    self.failures[i] = 0;
                    Success
                }
                Failure => {
                    self.failures[i] += 1;
                    if self.failures[i] >= k {
                        self.failures[i] = 0;
                        Failure
                    } else {
                        Running
                    }
                }
            },
        }
    }
}

pub fn random_status(rng: &mut impl Rng, condition: bool) -> TickStatus {
    let r = rng.gen_range(0..if condition { 2 } else { 3 });
    [TickStatus::Success, TickStatus::Failure, TickStatus::Running][r]
}

/// Random tree of at most `max_depth` levels. Condition leaves never script Running.
pub fn random_tree(rng: &mut impl Rng, max_depth: usize) -> RefTree {
    if max_depth <= 1 || rng.gen_bool(0.3) {
        let condition = rng.gen_bool(0.3);
        let len = rng.gen_range(1..=4);
        return RefTree::Leaf {
            condition,
            script: (0..len).map(|_| random_status(rng, condition)).collect(),
        };
    }
    match rng.gen_range(0..3) {
        0 => RefTree::Seq(
            (0..rng.gen_range(1..=4))
                .map(|_| random_tree(rng, max_depth - 1))
                .collect(),
        ),
        1 => RefTree::Fb(
            (0..rng.gen_range(1..=4))
                .map(|_| random_tree(rng, max_depth - 1))
                .collect(),
        ),
        _ => RefTree::Retry(rng.gen_range(1..=4), Box::new(random_tree(rng, max_depth - 1))),
    }
}

/// World whose only state is a step counter and per-leaf call counters.
#[derive(Debug, Clone, Default)]
pub struct ScriptedWorld {
    pub steps: u64,
    pub calls: HashMap<String, usize>,
}

impl World for ScriptedWorld {
    fn step_index(&self) -> u64 {
        self.steps
    }

    fn snapshot(&self) -> String {
        let mut calls: Vec<_> = self.calls.iter().collect();
        calls.sort();
        format!("steps={} calls={calls:?}", self.steps)
    }
}

/// Library with one action per scripted leaf of `tree`. Condition leaves are
/// bound as actions too, since perception cannot count its own calls.
pub fn scripted_library(tree: &RefTree) -> BehaviorLibrary<ScriptedWorld> {
    let mut library = BehaviorLibrary::new();
    for (i, script) in tree.scripts() {
        let name = format!("L{i}");
        let key = name.clone();
        library
            .register(
                BehaviorTag::new(&name, BehaviorKind::Action, "scripted"),
                Executable::action(move |_, w: &mut ScriptedWorld| {
                    let k = w.calls.entry(key.clone()).or_insert(0);
                    let s = script[*k % script.len()];
                    *k += 1;
                    w.steps += 1;
                    Outcome::new(s, format!("call {k}"))
                }),
            )
            .unwrap();
    }
    library
}

/// Same tree with every leaf an action, for executor runs.
pub fn as_actions(tree: &RefTree) -> RefTree {
    match tree {
        RefTree::Seq(c) => RefTree::Seq(c.iter().map(as_actions).collect()),
        RefTree::Fb(c) => RefTree::Fb(c.iter().map(as_actions).collect()),
        RefTree::Retry(k, c) => RefTree::Retry(*k, Box::new(as_actions(c))),
        RefTree::Leaf { script, .. } => RefTree::Leaf {
            condition: false,
            script: script.clone(),
        },
    }
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn asset(path: &str) -> PathBuf {
    workspace_root().join("assets").join(path)
}
