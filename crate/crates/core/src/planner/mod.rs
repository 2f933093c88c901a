//! Instruction to task graph: prompt assembly, model backends and the
//! parse/validate/repair loop.

mod backend;
mod template;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use log::{debug, warn};
use thiserror::Error;

pub use backend::{
    parse_chat_response, BackendError, ChatMessage, ChatRequest, HttpChatBackend, PlannerBackend, ReplayBackend, Role,
    TemplateBackend,
};
pub use template::{
    classify, extract_target, template_plan, template_plan_with, template_tree, TaskTemplate, TemplateError,
    TemplateOptions,
};

use crate::bt::{escape_text, parse_xml, serialize, validate, ParseError, TaskGraph, Tree, ValidationReport};
use crate::registry::{BehaviorKind, BehaviorLibrary};
use crate::sim::param_signature;

pub const DEFAULT_MAX_REPAIR_ROUNDS: usize = 2;

/// Robot description used when none is configured.
pub const DEFAULT_ROBOT_DESCRIPTION: &str = "\
You control a wheeled mobile manipulator working at a desk. It has an omnidirectional base, \
a torso with one arm ending in a two-finger gripper, and a head camera that sees objects in \
front of the robot up to a few metres away. The arm reaches about 0.8 m from the base, so the \
robot must drive closer before grasping distant objects. Sensors can fail: a grasp may slip, \
detection may miss an object and visual question answering may answer wrongly.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("behavior library is empty")]
    EmptyLibrary,
    #[error("robot description is empty")]
    EmptyDescription,
}

/// The four prompt sections, in render order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub robot_description: String,
    pub library_block: String,
    pub output_format_spec: String,
    /// The instruction with XML markup escaped.
    pub instruction: String,
}

impl PromptBundle {
    pub fn render(&self) -> String {
        format!(
            "# Robot\n{}\n\n# Behavior library\n{}\n# Output format\n{}\n# Instruction\n{}\n",
            self.robot_description.trim_end(),
            self.library_block,
            self.output_format_spec,
            self.instruction
        )
    }
}

pub fn build_prompt<W>(
    instruction: &str,
    library: &BehaviorLibrary<W>,
    robot_description: &str,
) -> Result<PromptBundle, PromptError> {
    if instruction.trim().is_empty() {
        return Err(PromptError::EmptyInstruction);
    }
    if library.is_empty() {
        return Err(PromptError::EmptyLibrary);
    }
    if robot_description.trim().is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    Ok(PromptBundle {
        robot_description: robot_description.to_string(),
        library_block: library.tags_prompt_block(),
        output_format_spec: output_format_spec(library),
        instruction: escape_text(instruction.trim()),
    })
}

fn worked_example() -> String {
    let target = "mustard_bottle";
    let tree = Tree::sequence(vec![
        Tree::action("Approach").param("target", target),
        Tree::retry(
            3,
            Tree::sequence(vec![
                Tree::action("Grasp").param("target", target),
                Tree::condition("IsObjectHeld").param("target", target),
            ]),
        ),
        Tree::action("Lift"),
    ]);
    serialize(&TaskGraph::new("pick_mustard_bottle", tree)).expect("worked example is valid")
}

/// Schema, node definitions, parameters, conditions and one example.
pub fn output_format_spec<W>(library: &BehaviorLibrary<W>) -> String {
    let mut out = String::new();
    out.push_str(
        "Reply with one behavior tree as XML. The root element is TaskGraph with an optional name \
attribute and exactly one child node. Node elements:\n\
- Sequence: ticks children in order; fails as soon as one fails, succeeds when all succeed.\n\
- Fallback: ticks children in order; succeeds as soon as one succeeds, fails when all fail.\n\
- Retry num_attempts=\"N\": one child; re-runs it after failure, at most N runs in total.\n\
- Action name=\"B\": runs action behavior B; other attributes are its parameters.\n\
- Condition name=\"C\": checks condition C or perception behavior B; other attributes are parameters.\n\
Sequence, Fallback and Retry need at least one child. Action and Condition have no children.\n",
    );
    out.push_str("\nParameters:\n");
    for tag in library.tags() {
        let sig = param_signature(&tag.name).unwrap_or("see behavior description");
        let leaf = match tag.kind {
            BehaviorKind::Action => "Action",
            BehaviorKind::Perception => "Condition",
        };
        let _ = writeln!(out, "- {} ({leaf}): {sig}", tag.name);
    }
    let mut conditions: Vec<_> = library.conditions().collect();
    conditions.sort_by(|a, b| a.name.cmp(&b.name));
    if !conditions.is_empty() {
        out.push_str("\nConditions (use as Condition name=\"...\" with a target parameter):\n");
        for c in conditions {
            let _ = writeln!(out, "- {}: {}", c.name, c.description);
        }
    }
    out.push_str(
        "\nWrap a Grasp in Retry together with IsObjectHeld when the task asks to detect and recover failures.\n\
Use object names with underscores, for example cracker_box. Output only the XML.\n\nExample:\n",
    );
    out.push_str(&worked_example());
    out
}

/// Finds the first well-formed `<TaskGraph>...</TaskGraph>` in a model reply.
/// Syntax error positions are reported relative to the whole reply.
pub fn extract_task_graph(response: &str) -> Result<TaskGraph, ParseError> {
    const OPEN: &str = "<TaskGraph";
    const CLOSE: &str = "</TaskGraph>";
    let mut first_syntax = None;
    let mut search = 0;
    while let Some(rel) = response[search..].find(OPEN) {
        let start = search + rel;
        search = start + OPEN.len();
        let boundary = response[search..].chars().next();
        if !matches!(boundary, Some(c) if c.is_whitespace() || c == '>' || c == '/') {
            continue;
        }
        let end = response[start..]
            .find(CLOSE)
            .map_or(response.len(), |i| start + i + CLOSE.len());
        match parse_xml(&response[start..end]) {
            Ok(graph) => return Ok(graph),
            Err(e @ ParseError::Schema { .. }) => return Err(e),
            Err(ParseError::Syntax { line, column, message }) => {
                if first_syntax.is_none() {
                    let before = &response[..start];
                    let line_base = before.matches('\n').count() as u32;
                    let col_base = before[before.rfind('\n').map_or(0, |i| i + 1)..].chars().count() as u32;
                    first_syntax = Some(ParseError::Syntax {
                        line: line + line_base,
                        column: if line == 1 { column + col_base } else { column },
                        message,
                    });
                }
            }
        }
    }
    Err(first_syntax.unwrap_or_else(|| ParseError::Syntax {
        line: 1,
        column: 1,
        message: "response contains no <TaskGraph> element".into(),
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    /// Present only when `validation.ok`.
    pub graph: Option<TaskGraph>,
    pub raw_responses: Vec<String>,
    pub repair_rounds_used: usize,
    pub validation: ValidationReport,
    pub latency: Vec<Duration>,
    /// Full conversation, ending with the last reply.
    pub conversation: Vec<ChatMessage>,
}

impl PlanOutcome {
    pub fn total_latency(&self) -> Duration {
        self.latency.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl PlanError {
    pub fn is_transport(&self) -> bool {
        matches!(self, PlanError::Backend(e) if e.is_transport())
    }
}

/// Plans with the default robot description.
pub fn generate_task_graph<W>(
    instruction: &str,
    library: &BehaviorLibrary<W>,
    backend: &dyn PlannerBackend,
    max_repair_rounds: usize,
) -> Result<PlanOutcome, PlanError> {
    let bundle = build_prompt(instruction, library, DEFAULT_ROBOT_DESCRIPTION)?;
    plan_with_prompt(instruction, &bundle, library, backend, max_repair_rounds)
}

fn complete_with_retry(backend: &dyn PlannerBackend, request: ChatRequest<'_>) -> Result<String, BackendError> {
    match backend.complete(request) {
        Err(e) if e.is_transport() => {
            warn!("{} backend: {e}; retrying once", backend.kind());
            backend.complete(request)
        }
        other => other,
    }
}

struct Assessment {
    graph: Option<TaskGraph>,
    report: ValidationReport,
    feedback: String,
}

fn assess<W>(response: &str, library: &BehaviorLibrary<W>) -> Assessment {
    match extract_task_graph(response) {
        Err(e @ ParseError::Syntax { .. }) => Assessment {
            graph: None,
            report: ValidationReport::single_error(e.to_string()),
            feedback: format!("your XML failed to parse: {e}; emit only corrected XML"),
        },
        Err(e) => Assessment {
            graph: None,
            report: ValidationReport::single_error(e.to_string()),
            feedback: format!("your XML does not follow the task graph schema:\n- {e}\nemit only corrected XML"),
        },
        Ok(graph) => {
            let report = validate(&graph, library);
            let feedback = format!("your task graph failed validation:\n{report}emit only corrected XML");
            Assessment {
                graph: report.ok.then_some(graph),
                report,
                feedback,
            }
        }
    }
}

/// The repair loop over an already built prompt.
pub fn plan_with_prompt<W>(
    instruction: &str,
    bundle: &PromptBundle,
    library: &BehaviorLibrary<W>,
    backend: &dyn PlannerBackend,
    max_repair_rounds: usize,
) -> Result<PlanOutcome, PlanError> {
    let mut conversation = vec![ChatMessage::user(bundle.render())];
    let mut raw_responses = Vec::new();
    let mut latency = Vec::new();
    let mut round = 0;
    loop {
        let started = Instant::now();
        let reply = complete_with_retry(
            backend,
            ChatRequest {
                instruction,
                messages: &conversation,
            },
        )?;
        latency.push(if backend.measures_latency() {
            started.elapsed()
        } else {
            Duration::ZERO
        });
        let assessment = assess(&reply, library);
        raw_responses.push(reply.clone());
        conversation.push(ChatMessage::assistant(reply));
        if assessment.graph.is_some() || round == max_repair_rounds {
            if assessment.graph.is_none() {
                debug!("giving up after {round} repair rounds");
            }
            return Ok(PlanOutcome {
                graph: assessment.graph,
                raw_responses,
                repair_rounds_used: round,
                validation: assessment.report,
                latency,
                conversation,
            });
        }
        debug!(
            "repair round {}: {}",
            round + 1,
            assessment.feedback.lines().next().unwrap_or("")
        );
        conversation.push(ChatMessage::user(assessment.feedback));
        round += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{standard_library, SimConfig, WorldState};

    fn lib() -> BehaviorLibrary<WorldState> {
        standard_library(&SimConfig::default())
    }

    #[test]
    fn bundle_sections_and_order() {
        let b = build_prompt("Find the soup can and pick it up", &lib(), DEFAULT_ROBOT_DESCRIPTION).unwrap();
        assert_eq!(b.library_block, lib().tags_prompt_block());
        assert!(b
            .library_block
            .contains("Grasp | action | moving gripper to a given pose and close it"));
        assert_eq!(b.output_format_spec.matches("<TaskGraph").count(), 1);
        let text = b.render();
        let pos: Vec<usize> = ["# Robot", "# Behavior library", "# Output format", "# Instruction"]
            .iter()
            .map(|h| text.find(h).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(text.matches("<TaskGraph").count(), 1);
    }

    #[test]
    fn rejects_empty_inputs() {
        assert_eq!(build_prompt("  ", &lib(), "r"), Err(PromptError::EmptyInstruction));
        let empty: BehaviorLibrary<WorldState> = BehaviorLibrary::new();
        assert_eq!(build_prompt("pick", &empty, "r"), Err(PromptError::EmptyLibrary));
    }

    #[test]
    fn worked_example_validates() {
        let g = parse_xml(&worked_example()).unwrap();
        assert!(validate(&g, &lib()).ok);
    }

    #[test]
    fn extraction_skips_prose_and_maps_lines() {
        let reply = "Sure!\n```xml\n<TaskGraph name=\"t\">\n  <Action name=\"Lift\"/>\n</TaskGraph>\n```\n";
        assert_eq!(extract_task_graph(reply).unwrap().name, "t");
        let bad = "Here:\n\n<TaskGraph>\n  <Action name=\"Lift\">\n</TaskGraph>";
        match extract_task_graph(bad).unwrap_err() {
            ParseError::Syntax { line, .. } => assert!(line >= 4, "line {line}"),
            e => panic!("{e:?}"),
        }
        assert!(extract_task_graph("no xml here").unwrap_err().is_syntax());
        assert!(extract_task_graph("<TaskGraphs/>").unwrap_err().is_syntax());
        assert!(extract_task_graph("<TaskGraph><Jump/></TaskGraph>")
            .unwrap_err()
            .is_schema());
        let two = "<TaskGraph><Oops</TaskGraph> then <TaskGraph name=\"b\"><Action name=\"Lift\"/></TaskGraph>";
        assert_eq!(extract_task_graph(two).unwrap().name, "b");
    }

    #[test]
    fn syntax_error_column_offset_on_first_line() {
        let e = extract_task_graph("abc <TaskGraph><</TaskGraph>").unwrap_err();
        let direct = parse_xml("<TaskGraph><</TaskGraph>").unwrap_err();
        match (e, direct) {
            (ParseError::Syntax { line: 1, column: c, .. }, ParseError::Syntax { line: 1, column: d, .. }) => {
                assert_eq!(c, d + 4)
            }
            other => panic!("{other:?}"),
        }
    }

    struct Flaky(std::sync::atomic::AtomicUsize);

    impl PlannerBackend for Flaky {
        fn kind(&self) -> &'static str {
            "flaky"
        }
        fn complete(&self, _: ChatRequest<'_>) -> Result<String, BackendError> {
            if self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                Err(BackendError::Transport("reset".into()))
            } else {
                Ok("<TaskGraph><Action name=\"Lift\"/></TaskGraph>".into())
            }
        }
    }

    #[test]
    fn transport_failure_retried_once() {
        let out = generate_task_graph("lift", &lib(), &Flaky(0.into()), 2).unwrap();
        assert!(out.graph.is_some());
        assert_eq!(out.raw_responses.len(), 1);
    }

    struct Down;

    impl PlannerBackend for Down {
        fn kind(&self) -> &'static str {
            "down"
        }
        fn complete(&self, _: ChatRequest<'_>) -> Result<String, BackendError> {
            Err(BackendError::Transport("refused".into()))
        }
    }

    #[test]
    fn persistent_transport_failure_surfaces() {
        let err = generate_task_graph("lift", &lib(), &Down, 2).unwrap_err();
        assert!(err.is_transport());
    }

    #[test]
    fn validation_failure_feeds_issue_list_back() {
        let backend = ReplayBackend::new(vec![
            "<TaskGraph><Action name=\"Fly\"/></TaskGraph>".into(),
            "<TaskGraph><Action name=\"Lift\"/></TaskGraph>".into(),
        ]);
        let out = generate_task_graph("lift it", &lib(), &backend, 2).unwrap();
        assert_eq!(out.repair_rounds_used, 1);
        let second = &backend.requests()[1];
        assert_eq!(second.len(), 3);
        assert!(second[2].content.contains("unknown behavior Fly"));
    }

    #[test]
    fn zero_rounds_is_single_shot() {
        let backend = ReplayBackend::new(vec![
            "junk".into(),
            "<TaskGraph><Action name=\"Lift\"/></TaskGraph>".into(),
        ]);
        let out = generate_task_graph("lift", &lib(), &backend, 0).unwrap();
        assert!(out.graph.is_none());
        assert!(!out.validation.ok);
        assert_eq!(out.raw_responses.len(), 1);
    }
}
