mod common;

use std::collections::HashMap;
use std::convert::Infallible;

use common::{as_actions, scripted_library, RefInterp, RefTree, ScriptedWorld};
use proptest::prelude::*;
use taskgraph::bt::{tick, Node, RunState, TaskGraph, TickStatus};
use taskgraph::executor::{run, RunLimits, RunOutcome};

const TICKS: usize = 20;

fn arb_status(condition: bool) -> impl Strategy<Value = TickStatus> {
    if condition {
        prop_oneof![Just(TickStatus::Success), Just(TickStatus::Failure)].boxed()
    } else {
        prop_oneof![
            Just(TickStatus::Success),
            Just(TickStatus::Failure),
            Just(TickStatus::Running)
        ]
        .boxed()
    }
}

fn arb_leaf() -> impl Strategy<Value = RefTree> {
    any::<bool>().prop_flat_map(|condition| {
        prop::collection::vec(arb_status(condition), 1..5).prop_map(move |script| RefTree::Leaf { condition, script })
    })
}

/// Trees of depth at most 5.
fn arb_tree() -> impl Strategy<Value = RefTree> {
    arb_leaf().prop_recursive(4, 64, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..5).prop_map(RefTree::Seq),
            prop::collection::vec(inner.clone(), 1..5).prop_map(RefTree::Fb),
            (1u32..5, inner).prop_map(|(k, c)| RefTree::Retry(k, Box::new(c))),
        ]
    })
}

/// Ticks the library implementation; returns root statuses and leaf call order.
fn library_run(graph: &TaskGraph, scripts: &HashMap<usize, Vec<TickStatus>>) -> (Vec<TickStatus>, Vec<usize>) {
    let mut state = RunState::new(graph);
    let mut calls: HashMap<usize, usize> = HashMap::new();
    let mut log = Vec::new();
    let mut out = Vec::new();
    for _ in 0..TICKS {
        let status = tick(graph, &mut state, &mut |node: &Node| -> Result<_, Infallible> {
            let script = &scripts[&node.id.0];
            let k = calls.entry(node.id.0).or_insert(0);
            let s = script[*k % script.len()];
            *k += 1;
            log.push(node.id.0);
            Ok(s)
        })
        .expect("tick");
        out.push(status);
    }
    (out, log)
}

fn reference_run(tree: &RefTree) -> (Vec<TickStatus>, Vec<usize>) {
    let mut r = RefInterp::new(tree);
    let out = (0..TICKS).map(|_| r.tick()).collect();
    (out, r.log)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10_000, ..ProptestConfig::default() })]

    #[test]
    fn tick_matches_reference_interpreter(tree in arb_tree()) {
        prop_assert!(tree.depth() <= 5);
        let graph = tree.graph();
        let (statuses, log) = library_run(&graph, &tree.scripts());
        let (want_statuses, want_log) = reference_run(&tree);
        prop_assert_eq!(statuses, want_statuses);
        prop_assert_eq!(log, want_log);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2_000, ..ProptestConfig::default() })]

    /// The executor dispatches exactly the leaves the reference interpreter
    /// calls, one root tick per step, and stops at the first terminal status.
    #[test]
    fn executor_follows_reference(tree in arb_tree()) {
        let tree = as_actions(&tree);
        let graph = tree.graph();
        let library = scripted_library(&tree);
        let mut world = ScriptedWorld::default();
        let result = run(&graph, &library, &mut world, RunLimits::ticks(TICKS as u64)).expect("run");

        let mut reference = RefInterp::new(&tree);
        let mut ticks = 0;
        let mut last = TickStatus::Running;
        while ticks < TICKS && last == TickStatus::Running {
            last = reference.tick();
            ticks += 1;
        }
        let want_outcome = match last {
            TickStatus::Success => RunOutcome::Done,
            TickStatus::Failure => RunOutcome::Failed,
            TickStatus::Running => RunOutcome::BudgetExhausted,
        };
        prop_assert_eq!(result.outcome, want_outcome);
        prop_assert_eq!(result.ticks_used, ticks as u64);
        let dispatched: Vec<usize> = result.trace.iter().map(|e| e.node.0).collect();
        prop_assert_eq!(&dispatched, &reference.log);
        // Every event carries the world step after its own dispatch.
        for (i, e) in result.trace.iter().enumerate() {
            prop_assert_eq!(e.world_step, i as u64 + 1);
            prop_assert!(e.tick_index < ticks as u64);
        }
        prop_assert!(result.trace.windows(2).all(|w| w[0].tick_index <= w[1].tick_index));
    }
}

#[test]
fn retry_counts_total_executions() {
    // Always-failing child under Retry(3): three calls, Running, Running, Failure.
    let tree = RefTree::Retry(
        3,
        Box::new(RefTree::Leaf {
            condition: false,
            script: vec![TickStatus::Failure],
        }),
    );
    let (statuses, log) = library_run(&tree.graph(), &tree.scripts());
    assert_eq!(
        &statuses[..3],
        &[TickStatus::Running, TickStatus::Running, TickStatus::Failure]
    );
    assert_eq!(log.len(), TICKS);
}
