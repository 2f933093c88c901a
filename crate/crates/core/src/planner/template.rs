//! Keyword-rule planner producing the canonical tree for each benchmark
//! task. Deterministic; used as an offline backend and as a test oracle.

use std::fmt;

use thiserror::Error;

use crate::bt::{validate, TaskGraph, Tree, ValidationReport};
use crate::registry::BehaviorLibrary;
use crate::sim::WorldState;

/// The eight benchmark task shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskTemplate {
    Find,
    Approach,
    Grasp,
    Pick,
    PickFr,
    PickAndPlace,
    PickAndPlaceFr,
    FindAndPickFr,
}

impl TaskTemplate {
    pub const ALL: [TaskTemplate; 8] = [
        TaskTemplate::Find,
        TaskTemplate::Approach,
        TaskTemplate::Grasp,
        TaskTemplate::Pick,
        TaskTemplate::PickFr,
        TaskTemplate::PickAndPlace,
        TaskTemplate::PickAndPlaceFr,
        TaskTemplate::FindAndPickFr,
    ];

    pub fn id(self) -> &'static str {
        match self {
            TaskTemplate::Find => "find",
            TaskTemplate::Approach => "approach",
            TaskTemplate::Grasp => "grasp",
            TaskTemplate::Pick => "pick",
            TaskTemplate::PickFr => "pick_fr",
            TaskTemplate::PickAndPlace => "pick_place",
            TaskTemplate::PickAndPlaceFr => "pick_place_fr",
            TaskTemplate::FindAndPickFr => "find_pick_fr",
        }
    }

    pub fn has_recovery(self) -> bool {
        matches!(
            self,
            TaskTemplate::PickFr | TaskTemplate::PickAndPlaceFr | TaskTemplate::FindAndPickFr
        )
    }

    /// A natural instruction for this template and target.
    pub fn instruction(self, target: &str) -> String {
        let t = target.replace('_', " ");
        const FR: &str = "Detect and recover the failure during the task.";
        match self {
            TaskTemplate::Find => format!("Find the {t}."),
            TaskTemplate::Approach => format!("Approach the {t}."),
            TaskTemplate::Grasp => format!("Grasp the {t}."),
            TaskTemplate::Pick => format!("Pick up the {t}."),
            TaskTemplate::PickFr => format!("Pick up the {t}. {FR}"),
            TaskTemplate::PickAndPlace => format!("Pick the {t}, place it aside."),
            TaskTemplate::PickAndPlaceFr => format!("Pick the {t}, place it aside. {FR}"),
            TaskTemplate::FindAndPickFr => format!("Find the {t} and pick it up. {FR}"),
        }
    }

    /// Whether the final world achieves the task, judged from ground truth.
    pub fn goal_satisfied(self, target: &str, initial: &WorldState, final_world: &WorldState) -> bool {
        let Some(i) = final_world.find_object(target) else {
            return false;
        };
        let object = &final_world.objects[i];
        let held = final_world.robot.held_object.as_deref() == Some(object.id.as_str());
        match self {
            TaskTemplate::Find => final_world.in_view(object),
            TaskTemplate::Approach => final_world.robot.base.planar_distance(&object.pose) <= final_world.config.reach,
            TaskTemplate::Grasp => held,
            TaskTemplate::Pick | TaskTemplate::PickFr | TaskTemplate::FindAndPickFr => {
                let chest = final_world.robot.base.z + final_world.config.chest_height;
                held && object.pose.z >= chest - 1e-9
            }
            TaskTemplate::PickAndPlace | TaskTemplate::PickAndPlaceFr => {
                let Some(before) = initial.object(&object.id) else {
                    return false;
                };
                let d = &before.pose;
                let moved =
                    ((object.pose.x - d.x).powi(2) + (object.pose.y - d.y).powi(2) + (object.pose.z - d.z).powi(2))
                        .sqrt();
                !held && final_world.robot.gripper_open && moved > 0.05
            }
        }
    }
}

impl fmt::Display for TaskTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("no task template matches instruction {0:?}")]
    NoTemplate(String),
    #[error("no known target object in instruction {0:?}")]
    NoTarget(String),
    #[error("template plan does not validate against the library:\n{0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateOptions {
    pub retry_attempts: u32,
    /// Drop-off point in the robot base frame for "place it aside".
    pub aside: (f64, f64, f64),
}

impl Default for TemplateOptions {
    fn default() -> Self {
        TemplateOptions {
            retry_attempts: 3,
            aside: (0.45, 0.45, 0.8),
        }
    }
}

/// Object vocabulary: phrases (longest first within an entry) to object id.
const VOCABULARY: &[(&[&str], &str)] = &[
    (&["cracker box", "crackers", "cracker"], "cracker_box"),
    (&["sugar box", "sugar"], "sugar_box"),
    (&["tomato soup can", "soup can", "soup"], "soup_can"),
    (&["mustard bottle", "mustard", "bottle"], "mustard_bottle"),
    (&["mug", "cup"], "mug"),
    (&["banana"], "banana"),
    (&["apple"], "apple"),
    (&["bowl"], "bowl"),
];

/// Extracts the target object id: an explicit `snake_case` token wins,
/// otherwise the earliest vocabulary phrase.
pub fn extract_target(instruction: &str) -> Option<String> {
    let lower = instruction.to_ascii_lowercase();
    if let Some(token) = lower
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .find(|t| t.contains('_') && t.chars().any(|c| c.is_ascii_alphabetic()))
    {
        return Some(token.trim_matches('_').to_string());
    }
    VOCABULARY
        .iter()
        .flat_map(|(phrases, id)| phrases.iter().map(move |p| (*p, *id)))
        .filter_map(|(phrase, id)| find_word(&lower, phrase).map(|pos| (pos, std::cmp::Reverse(phrase.len()), id)))
        .min()
        .map(|(_, _, id)| id.to_string())
}

fn find_word(haystack: &str, phrase: &str) -> Option<usize> {
    let bytes = haystack.as_bytes();
    haystack.match_indices(phrase).map(|(i, _)| i).find(|&i| {
        let before = i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
        let end = i + phrase.len();
        let after = end >= bytes.len() || !bytes[end].is_ascii_alphanumeric();
        before && after
    })
}

fn mentions(lower: &str, words: &[&str]) -> bool {
    words.iter().any(|w| find_word(lower, w).is_some())
}

/// Maps an instruction to its template and target object.
pub fn classify(instruction: &str) -> Result<(TaskTemplate, String), TemplateError> {
    let lower = instruction.to_ascii_lowercase();
    let fr = mentions(&lower, &["recover", "recovery", "failure", "failures", "fr"]);
    let find = mentions(&lower, &["find", "search", "locate", "look for"]);
    let pick = mentions(&lower, &["pick", "lift"]);
    let grasp = mentions(&lower, &["grasp", "grab", "grip"]);
    let place = mentions(&lower, &["place", "put", "drop"]);
    let approach = mentions(&lower, &["approach", "go to", "move to", "move closer", "come to"]);

    let template = if find && (pick || grasp) {
        TaskTemplate::FindAndPickFr
    } else if place && (pick || grasp) {
        if fr {
            TaskTemplate::PickAndPlaceFr
        } else {
            TaskTemplate::PickAndPlace
        }
    } else if pick {
        if fr {
            TaskTemplate::PickFr
        } else {
            TaskTemplate::Pick
        }
    } else if grasp {
        TaskTemplate::Grasp
    } else if find {
        TaskTemplate::Find
    } else if approach {
        TaskTemplate::Approach
    } else {
        return Err(TemplateError::NoTemplate(instruction.to_string()));
    };
    let target = extract_target(instruction).ok_or_else(|| TemplateError::NoTarget(instruction.to_string()))?;
    Ok((template, target))
}

/// Explicit drop-off point: the first `(x, y, z)` triple in the text.
fn explicit_point(instruction: &str) -> Option<(f64, f64, f64)> {
    let mut rest = instruction;
    while let Some(open) = rest.find('(') {
        let after = &rest[open + 1..];
        let close = after.find(')')?;
        let nums: Option<Vec<f64>> = after[..close].split(',').map(|p| p.trim().parse().ok()).collect();
        if let Some([x, y, z]) = nums.as_deref() {
            return Some((*x, *y, *z));
        }
        rest = &after[close..];
    }
    None
}

/// The canonical tree for a template and target.
pub fn template_tree(template: TaskTemplate, target: &str, instruction: &str, options: &TemplateOptions) -> TaskGraph {
    let approach = || Tree::action("Approach").param("target", target);
    let grasp = || Tree::action("Grasp").param("target", target);
    let visible = || Tree::condition("ObjectVisible").param("target", target);
    let lift = || Tree::action("Lift");
    let recover_grasp = || {
        Tree::retry(
            options.retry_attempts,
            Tree::sequence(vec![grasp(), Tree::condition("IsObjectHeld").param("target", target)]),
        )
    };
    let place = || match explicit_point(instruction) {
        Some((x, y, z)) => Tree::action("Place")
            .param("x", x.to_string())
            .param("y", y.to_string())
            .param("z", z.to_string()),
        None => {
            let (x, y, z) = options.aside;
            Tree::action("Place")
                .param("frame", "base")
                .param("x", x.to_string())
                .param("y", y.to_string())
                .param("z", z.to_string())
        }
    };
    let tree = match template {
        TaskTemplate::Find => Tree::fallback(vec![visible(), Tree::sequence(vec![approach(), visible()])]),
        TaskTemplate::Approach => Tree::sequence(vec![approach(), Tree::condition("IsNear").param("target", target)]),
        TaskTemplate::Grasp => Tree::sequence(vec![approach(), grasp()]),
        TaskTemplate::Pick => Tree::sequence(vec![approach(), grasp(), lift()]),
        TaskTemplate::PickFr => Tree::sequence(vec![approach(), recover_grasp(), lift()]),
        TaskTemplate::PickAndPlace => Tree::sequence(vec![approach(), grasp(), lift(), place()]),
        TaskTemplate::PickAndPlaceFr => Tree::sequence(vec![approach(), recover_grasp(), lift(), place()]),
        TaskTemplate::FindAndPickFr => Tree::sequence(vec![
            Tree::condition("ObjectDetection").param("target", target),
            approach(),
            recover_grasp(),
            lift(),
        ]),
    };
    TaskGraph::new(template.id(), tree)
}

/// Plans an instruction from the template rules and checks the result
/// against the library.
pub fn template_plan<W>(instruction: &str, library: &BehaviorLibrary<W>) -> Result<TaskGraph, TemplateError> {
    template_plan_with(instruction, library, &TemplateOptions::default())
}

pub fn template_plan_with<W>(
    instruction: &str,
    library: &BehaviorLibrary<W>,
    options: &TemplateOptions,
) -> Result<TaskGraph, TemplateError> {
    let (template, target) = classify(instruction)?;
    let graph = template_tree(template, &target, instruction, options);
    let report = validate(&graph, library);
    if !report.ok {
        return Err(TemplateError::Invalid(report));
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::{NodeKind, Tree};
    use crate::sim::{standard_library, SimConfig};

    #[test]
    fn classifies_benchmark_instructions() {
        let cases = [
            ("Find the soup can.", TaskTemplate::Find, "soup_can"),
            ("Approach the mustard bottle", TaskTemplate::Approach, "mustard_bottle"),
            ("Grasp the sugar box.", TaskTemplate::Grasp, "sugar_box"),
            ("Pick up the mug", TaskTemplate::Pick, "mug"),
            (
                "Pick the cracker, place it aside. Detect and recover the failure during the task.",
                TaskTemplate::PickAndPlaceFr,
                "cracker_box",
            ),
            (
                "Pick the cracker, place it aside.",
                TaskTemplate::PickAndPlace,
                "cracker_box",
            ),
            (
                "Pick up the banana and recover from failures",
                TaskTemplate::PickFr,
                "banana",
            ),
            (
                "Find the soup can and pick it up",
                TaskTemplate::FindAndPickFr,
                "soup_can",
            ),
            ("Pick up the cracker_box", TaskTemplate::Pick, "cracker_box"),
        ];
        for (text, template, target) in cases {
            assert_eq!(classify(text), Ok((template, target.to_string())), "{text}");
        }
        assert!(matches!(
            classify("juggle three balls"),
            Err(TemplateError::NoTemplate(_))
        ));
        assert!(matches!(
            classify("pick up the spaceship"),
            Err(TemplateError::NoTarget(_))
        ));
    }

    #[test]
    fn instructions_round_trip_through_classifier() {
        for t in TaskTemplate::ALL {
            for target in ["cracker_box", "soup_can", "mustard_bottle", "mug"] {
                assert_eq!(classify(&t.instruction(target)), Ok((t, target.to_string())));
            }
        }
    }

    #[test]
    fn find_and_pick_shape() {
        let lib = standard_library(&SimConfig::default());
        let g = template_plan("Find the soup can and pick it up", &lib).unwrap();
        let expected = Tree::sequence(vec![
            Tree::condition("ObjectDetection").param("target", "soup_can"),
            Tree::action("Approach").param("target", "soup_can"),
            Tree::retry(
                3,
                Tree::sequence(vec![
                    Tree::action("Grasp").param("target", "soup_can"),
                    Tree::condition("IsObjectHeld").param("target", "soup_can"),
                ]),
            ),
            Tree::action("Lift"),
        ]);
        assert_eq!(g.to_tree().unwrap(), expected);
    }

    #[test]
    fn pick_place_fr_has_retry_and_place() {
        let lib = standard_library(&SimConfig::default());
        let g = template_plan(
            "Pick the cracker, place it aside. Detect and recover the failure during the task.",
            &lib,
        )
        .unwrap();
        assert!(g.nodes().iter().any(|n| n.kind == NodeKind::Retry { max_attempts: 3 }));
        assert!(g.leaves().iter().any(|n| n.kind.leaf_name() == Some("Place")));
    }

    #[test]
    fn explicit_place_point() {
        assert_eq!(
            explicit_point("place it at (1.0, 0.4, 0.8) please"),
            Some((1.0, 0.4, 0.8))
        );
        assert_eq!(explicit_point("place it (gently) at (1, 2, 3)"), Some((1.0, 2.0, 3.0)));
        assert_eq!(explicit_point("place it aside"), None);
    }

    #[test]
    fn every_template_validates() {
        let lib = standard_library(&SimConfig::default());
        for t in TaskTemplate::ALL {
            assert!(template_plan(&t.instruction("mug"), &lib).is_ok(), "{t}");
        }
    }
}
