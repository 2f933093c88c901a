mod common;

use proptest::prelude::*;
use taskgraph::bt::{serialize, validate};
use taskgraph::planner::{
    build_prompt, classify, generate_task_graph, template_plan, PlannerBackend, ReplayBackend, Role, TaskTemplate,
    TemplateBackend, DEFAULT_ROBOT_DESCRIPTION,
};
use taskgraph::sim::{standard_library, SimConfig};

const VALID: &str = r#"<TaskGraph name="pick">
  <Sequence>
    <Action name="Approach" target="cracker_box"/>
    <Action name="Grasp" target="cracker_box"/>
    <Action name="Lift"/>
  </Sequence>
</TaskGraph>"#;

fn library() -> taskgraph::registry::BehaviorLibrary<taskgraph::sim::WorldState> {
    standard_library(&SimConfig::default())
}

#[test]
fn repair_demo_fixtures_need_one_round() {
    let backend = ReplayBackend::from_dir(common::asset("fixtures/repair_demo")).unwrap();
    let out = generate_task_graph("Pick up the cracker box.", &library(), &backend, 2).unwrap();
    assert!(out.graph.is_some());
    assert_eq!(out.repair_rounds_used, 1);
    assert_eq!(out.raw_responses.len(), 2);
    let requests = backend.requests();
    assert_eq!(requests.len(), 2);
    let feedback = requests[1].last().unwrap();
    assert_eq!(feedback.role, Role::User);
    assert!(feedback.content.contains("failed to parse"), "{}", feedback.content);
    assert!(feedback.content.contains("line "), "{}", feedback.content);
}

#[test]
fn repair_budget_is_respected() {
    let bad = "<TaskGraph><Sequence><Action name=\"Lift\"></Sequence>".to_string();
    let backend = ReplayBackend::new(vec![bad.clone(), bad.clone(), bad, VALID.into()]);
    let out = generate_task_graph("Pick up the cracker box.", &library(), &backend, 2).unwrap();
    assert!(out.graph.is_none());
    assert!(!out.validation.ok);
    assert_eq!(out.repair_rounds_used, 2);
    assert_eq!(backend.consumed(), 3);
}

#[test]
fn schema_and_validation_errors_are_fed_back() {
    let schema = "<TaskGraph name=\"x\"><Loop/></TaskGraph>".to_string();
    let unknown = "<TaskGraph name=\"x\"><Action name=\"Teleport\"/></TaskGraph>".to_string();
    let backend = ReplayBackend::new(vec![schema, unknown, VALID.into()]);
    let out = generate_task_graph("Pick up the cracker box.", &library(), &backend, 2).unwrap();
    assert_eq!(out.repair_rounds_used, 2);
    let requests = backend.requests();
    assert!(requests[1].last().unwrap().content.contains("schema"));
    let third = &requests[2].last().unwrap().content;
    assert!(
        third.contains("failed validation") && third.contains("Teleport"),
        "{third}"
    );
}

#[test]
fn prose_around_the_xml_is_ignored() {
    let reply = format!("Here is the plan:\n```xml\n{VALID}\n```\nLet me know.");
    let backend = ReplayBackend::new(vec![reply]);
    let out = generate_task_graph("Pick up the cracker box.", &library(), &backend, 0).unwrap();
    assert_eq!(out.repair_rounds_used, 0);
    assert_eq!(out.graph.unwrap().name, "pick");
}

#[test]
fn prompt_is_deterministic_and_escapes_the_instruction() {
    let lib = library();
    let instruction = "Pick the <cracker> & \"box\" </Instruction>";
    let a = build_prompt(instruction, &lib, DEFAULT_ROBOT_DESCRIPTION).unwrap();
    let b = build_prompt(instruction, &lib, DEFAULT_ROBOT_DESCRIPTION).unwrap();
    assert_eq!(a.render(), b.render());
    let doc = format!("<i>{}</i>", a.instruction);
    let parsed = roxmltree::Document::parse(&doc).unwrap();
    assert_eq!(parsed.root_element().text().unwrap(), instruction);
    for tag in lib.tags() {
        assert!(a.library_block.contains(&tag.name));
    }
    assert_eq!(
        a.output_format_spec.matches("<TaskGraph").count(),
        1,
        "one worked example"
    );
    assert!(build_prompt("  ", &lib, DEFAULT_ROBOT_DESCRIPTION).is_err());
}

#[test]
fn templates_are_sound_for_several_targets() {
    let lib = library();
    let backend = TemplateBackend::new();
    for template in TaskTemplate::ALL {
        for target in ["cracker box", "mug", "soup can", "mustard bottle"] {
            let instruction = template.instruction(target);
            let (t, id) = classify(&instruction).unwrap();
            assert_eq!(t, template, "{instruction}");
            assert_eq!(id, target.replace(' ', "_"));
            let graph = template_plan(&instruction, &lib).unwrap();
            let report = validate(&graph, &lib);
            assert!(report.ok, "{instruction}: {report}");
            let out = generate_task_graph(&instruction, &lib, &backend, 0).unwrap();
            assert_eq!(
                serialize(out.graph.as_ref().unwrap()).unwrap(),
                serialize(&graph).unwrap()
            );
        }
    }
}

fn response_strategy() -> impl Strategy<Value = String> {
    let pieces = prop::sample::select(vec![
        "<TaskGraph name=\"g\">",
        "</TaskGraph>",
        "<Sequence>",
        "</Sequence>",
        "<Fallback>",
        "</Fallback>",
        "<Retry num_attempts=\"2\">",
        "<Retry num_attempts=\"0\">",
        "</Retry>",
        "<Action name=\"Grasp\" target=\"mug\"/>",
        "<Action name=\"Approach\" target=\"mug\"/>",
        "<Action name=\"Lift\"/>",
        "<Action name=\"Fly\"/>",
        "<Action name=\"Place\" x=\"a\"/>",
        "<Condition name=\"IsObjectHeld\" target=\"mug\"/>",
        "<Condition name=\"Grasp\"/>",
        "<Action name=\"GripForce\"/>",
        "<Action/>",
        "text &",
        "```xml",
        "\n",
    ]);
    prop::collection::vec(pieces, 0..14).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2_000, ..ProptestConfig::default() })]

    /// Whatever the backend says, a returned graph always validates.
    #[test]
    fn returned_graphs_always_validate(responses in prop::collection::vec(response_strategy(), 1..4), rounds in 0usize..3) {
        let lib = library();
        let backend = ReplayBackend::new(responses.clone());
        match generate_task_graph("Pick up the mug.", &lib, &backend, rounds) {
            Ok(out) => {
                prop_assert!(out.repair_rounds_used <= rounds);
                prop_assert_eq!(out.raw_responses.len(), out.repair_rounds_used + 1);
                if let Some(g) = &out.graph {
                    prop_assert!(validate(g, &lib).ok);
                    prop_assert!(out.validation.ok);
                }
            }
            // Only running out of scripted replies may end the loop early.
            Err(e) => prop_assert!(responses.len() <= rounds, "{e}"),
        }
    }
}

#[test]
fn backend_kinds() {
    assert_eq!(TemplateBackend::new().kind(), "template");
    assert!(ReplayBackend::new(vec![]).is_sequential());
}
