//! Drives a task graph against a world until the root settles.

mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{debug, info};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use trace::{Trace, TraceError, TraceFooter, TraceHeader, TRACE_VERSION};

use crate::bt::{
    serialize, tick, validate, NodeId, Params, RunState, TaskGraph, TickError, TickStatus, ValidationReport,
};
use crate::registry::{dispatch, BehaviorLibrary, DispatchRecord, LeafKind, World};
use crate::sim::{FaultProfile, Scene, SimConfig, WorldError, WorldState};

pub const DEFAULT_MAX_TICKS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLimits {
    pub max_ticks: u64,
    /// Wall-clock cap. Leave unset for reproducible runs.
    pub max_wall_time: Option<Duration>,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_ticks: DEFAULT_MAX_TICKS,
            max_wall_time: None,
        }
    }
}

impl RunLimits {
    pub fn ticks(max_ticks: u64) -> Self {
        RunLimits {
            max_ticks,
            max_wall_time: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunOutcome {
    Done,
    Failed,
    BudgetExhausted,
}

impl RunOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            RunOutcome::Done => "Done",
            RunOutcome::Failed => "Failed",
            RunOutcome::BudgetExhausted => "BudgetExhausted",
        }
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Done" => Ok(RunOutcome::Done),
            "Failed" => Ok(RunOutcome::Failed),
            "BudgetExhausted" => Ok(RunOutcome::BudgetExhausted),
            _ => Err(format!("unknown outcome {s:?}")),
        }
    }
}

/// One leaf dispatch within a root tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub tick_index: u64,
    pub node: NodeId,
    pub leaf: LeafKind,
    pub behavior: String,
    pub params: Params,
    pub status: TickStatus,
    /// World step counter after the dispatch.
    pub world_step: u64,
    pub detail: String,
}

impl TraceEvent {
    fn from_record(tick_index: u64, r: DispatchRecord) -> Self {
        TraceEvent {
            tick_index,
            node: r.node,
            leaf: r.leaf,
            behavior: r.behavior,
            params: r.params,
            status: r.status,
            world_step: r.world_step,
            detail: r.detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub outcome: RunOutcome,
    /// Root ticks performed.
    pub ticks_used: u64,
    pub trace: Vec<TraceEvent>,
    /// Snapshot of the world at termination.
    pub final_world: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("graph does not validate against the library:\n{0}")]
    InvalidGraph(ValidationReport),
    #[error("max_ticks must be at least 1")]
    InvalidLimits,
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Ticks the root once per step until it returns Success (Done) or Failure
/// (Failed), or the limits are hit (BudgetExhausted). The graph is
/// validated before the world is touched.
pub fn run<W: World>(
    graph: &TaskGraph,
    library: &BehaviorLibrary<W>,
    world: &mut W,
    limits: RunLimits,
) -> Result<RunResult, RunError> {
    if limits.max_ticks == 0 {
        return Err(RunError::InvalidLimits);
    }
    let report = validate(graph, library);
    if !report.ok {
        return Err(RunError::InvalidGraph(report));
    }
    let started = Instant::now();
    let mut state = RunState::new(graph);
    let mut trace = Vec::new();
    let mut records = Vec::new();
    let mut ticks_used = 0;
    let outcome = loop {
        if ticks_used >= limits.max_ticks || limits.max_wall_time.is_some_and(|cap| started.elapsed() >= cap) {
            break RunOutcome::BudgetExhausted;
        }
        let tick_index = ticks_used;
        let result = tick(graph, &mut state, &mut |node| {
            dispatch(library, node, world, &mut records)
        });
        ticks_used += 1;
        trace.extend(records.drain(..).map(|r| TraceEvent::from_record(tick_index, r)));
        match result {
            Ok(TickStatus::Running) => {}
            Ok(TickStatus::Success) => break RunOutcome::Done,
            Ok(TickStatus::Failure) => break RunOutcome::Failed,
            Err(e) => {
                let (node, leaf, behavior, params) = match &e {
                    TickError::Dispatch { node, .. } => match graph.node(*node) {
                        Some(n) => (
                            *node,
                            if matches!(n.kind, crate::bt::NodeKind::Condition { .. }) {
                                LeafKind::Condition
                            } else {
                                LeafKind::Action
                            },
                            n.kind.leaf_name().unwrap_or(n.kind.element()).to_string(),
                            n.kind.leaf_params().cloned().unwrap_or_default(),
                        ),
                        None => (*node, LeafKind::Action, String::new(), Params::new()),
                    },
                    TickError::Inconsistent(_) => (graph.root, LeafKind::Action, String::new(), Params::new()),
                };
                trace.push(TraceEvent {
                    tick_index,
                    node,
                    leaf,
                    behavior,
                    params,
                    status: TickStatus::Failure,
                    world_step: world.step_index(),
                    detail: format!("execution error: {e}"),
                });
                break RunOutcome::Failed;
            }
        }
    };
    debug!("run finished: {outcome} after {ticks_used} ticks");
    Ok(RunResult {
        outcome,
        ticks_used,
        trace,
        final_world: world.snapshot(),
    })
}

/// Hex SHA-256 of the canonical XML of a graph.
pub fn graph_hash(graph: &TaskGraph) -> String {
    let text = serialize(graph).unwrap_or_else(|e| format!("invalid graph {e}"));
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn sha_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A run on a fresh world built from a scene, with its trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRun {
    pub result: RunResult,
    pub trace: Trace,
    pub initial_world: WorldState,
}

pub fn run_scene(
    graph: &TaskGraph,
    library: &BehaviorLibrary<WorldState>,
    scene: &Scene,
    config: &SimConfig,
    faults: FaultProfile,
    limits: RunLimits,
) -> Result<RecordedRun, RunError> {
    let initial_world = WorldState::from_scene(scene, *config, faults)?;
    let mut world = initial_world.clone();
    let result = run(graph, library, &mut world, limits)?;
    let trace = Trace {
        header: TraceHeader {
            version: TRACE_VERSION,
            scene_hash: scene.hash(),
            graph_hash: graph_hash(graph),
            faults,
        },
        events: result.trace.clone(),
        footer: Some(TraceFooter {
            outcome: result.outcome,
            ticks_used: result.ticks_used,
            state_hash: sha_hex(&result.final_world),
        }),
    };
    Ok(RecordedRun {
        result,
        trace,
        initial_world,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("trace has no events")]
    EmptyTrace,
    #[error("trace was recorded for graph {recorded}, not {given}")]
    GraphMismatch { recorded: String, given: String },
    #[error(transparent)]
    Run(#[from] RunError),
    /// Lines are the tab-separated event records; a missing event reads `<end of trace>`.
    #[error("replay diverged at event {index}:\n  recorded: {recorded}\n  replayed: {replayed}")]
    Divergence {
        index: usize,
        recorded: String,
        replayed: String,
    },
    #[error("replay matched every event but {field} differs: recorded {recorded}, replayed {replayed}")]
    HeaderMismatch {
        field: &'static str,
        recorded: String,
        replayed: String,
    },
}

/// Re-runs a recorded trace on `scene` with `seed` and the recorded fault
/// probabilities, and checks the new trace against the recording.
pub fn replay(
    recorded: &Trace,
    graph: &TaskGraph,
    library: &BehaviorLibrary<WorldState>,
    scene: &Scene,
    config: &SimConfig,
    seed: u64,
    limits: RunLimits,
) -> Result<RecordedRun, ReplayError> {
    if recorded.events.is_empty() {
        return Err(ReplayError::EmptyTrace);
    }
    let given = graph_hash(graph);
    if given != recorded.header.graph_hash {
        return Err(ReplayError::GraphMismatch {
            recorded: recorded.header.graph_hash.clone(),
            given,
        });
    }
    let faults = recorded.header.faults.with_seed(seed);
    let rerun = run_scene(graph, library, scene, config, faults, limits)?;
    let old: Vec<String> = recorded.events.iter().map(TraceEvent::to_line).collect();
    let new: Vec<String> = rerun.trace.events.iter().map(TraceEvent::to_line).collect();
    if let Some(index) = (0..old.len().max(new.len())).find(|&i| old.get(i) != new.get(i)) {
        let at = |v: &[String]| v.get(index).cloned().unwrap_or_else(|| "<end of trace>".into());
        return Err(ReplayError::Divergence {
            index,
            recorded: at(&old),
            replayed: at(&new),
        });
    }
    let mismatch = |field, recorded: String, replayed: String| {
        (recorded != replayed).then_some(ReplayError::HeaderMismatch {
            field,
            recorded,
            replayed,
        })
    };
    let h = &recorded.header;
    let checks = [
        mismatch("scene", h.scene_hash.clone(), rerun.trace.header.scene_hash.clone()),
        mismatch("seed", h.faults.seed.to_string(), seed.to_string()),
        recorded.footer.as_ref().and_then(|f| {
            mismatch(
                "final state",
                f.to_string(),
                rerun.trace.footer.as_ref().map(ToString::to_string).unwrap_or_default(),
            )
        }),
    ];
    if let Some(e) = checks.into_iter().flatten().next() {
        return Err(e);
    }
    info!("replay reproduced {} events", new.len());
    Ok(rerun)
}
