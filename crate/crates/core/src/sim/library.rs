//! Bindings from the nine robot behaviors to the simulated world, plus the
//! fused conditions built on top of them.

use thiserror::Error;

use super::{Pose, QaTemplate, SimConfig, WorldState};
use crate::bt::{Params, TickStatus};
use crate::registry::{
    parse_manifest, BehaviorKind, BehaviorLibrary, BehaviorTag, ConditionMember, ConditionSpec, Executable,
    ManifestError, Outcome, Reading, RegistryError, SensorError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LibraryError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("no simulator binding for behavior {0}")]
    NoBinding(String),
}

/// Tags of the robot's behavior library.
pub fn standard_tags() -> Vec<BehaviorTag> {
    use BehaviorKind::{Action, Perception};
    [
        (
            "Homing",
            Action,
            "bringing all of the joints of robot to homing configuration",
        ),
        (
            "Approach",
            Action,
            "moving robot torso closer to target by certain distance",
        ),
        ("Grasp", Action, "moving gripper to a given pose and close it"),
        ("Lift", Action, "raising gripper to the chest and adjusting pose"),
        ("Place", Action, "moving gripper to the given position and open it"),
        ("Distance", Perception, "measuring distance between object and robot"),
        ("GripForce", Perception, "obtaining the actual torque of gripper"),
        (
            "ObjectDetection",
            Perception,
            "detecting and estimating 6-DoF of objects",
        ),
        (
            "VisualQA",
            Perception,
            "reasoning task state using visual language model",
        ),
    ]
    .into_iter()
    .map(|(name, kind, tag)| BehaviorTag::new(name, kind, tag))
    .collect()
}

/// Parameter list accepted by a simulator behavior, for prompt text.
pub fn param_signature(name: &str) -> Option<&'static str> {
    Some(match name {
        "Homing" | "Lift" | "GripForce" => "no parameters",
        "Approach" => "target (object name), standoff (optional, metres, default 0.5)",
        "Grasp" | "Distance" | "ObjectDetection" => "target (object name)",
        "Place" => "x, y, z (metres), frame (optional: world or base, default world)",
        "VisualQA" => "question (e.g. \"Is the mug held by the gripper?\")",
        _ => return None,
    })
}

fn target(params: &Params) -> Result<&str, String> {
    params
        .get("target")
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| "missing target parameter".to_string())
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome::new(TickStatus::Failure, detail)
}

fn place(params: &Params, world: &mut WorldState) -> Outcome {
    let coord = |key| match params.get_f64(key) {
        Some(Ok(v)) => Ok(v),
        Some(Err(e)) => Err(e),
        None => Err(format!("missing {key} parameter")),
    };
    let (x, y, z) = match (coord("x"), coord("y"), coord("z")) {
        (Ok(x), Ok(y), Ok(z)) => (x, y, z),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return fail(e),
    };
    match params.get("frame").unwrap_or("world") {
        "world" => world.act_place(x, y, z),
        "base" => {
            let at = world.robot.base.compose(&Pose::new(x, y, z, 0.0));
            world.act_place(at.x, at.y, at.z)
        }
        other => fail(format!("unknown frame {other:?}")),
    }
}

/// Simulator code for a behavior name, if the simulator implements it.
pub fn binding(name: &str) -> Option<Executable<WorldState>> {
    let exe = match name {
        "Homing" => Executable::action(|_, w: &mut WorldState| w.act_homing()),
        "Approach" => Executable::action(|p: &Params, w: &mut WorldState| {
            let standoff = match p.get_f64("standoff") {
                None => w.config.default_standoff,
                Some(Ok(v)) => v,
                Some(Err(e)) => return fail(e),
            };
            match target(p) {
                Ok(t) => w.act_approach(t, standoff),
                Err(e) => fail(e),
            }
        }),
        "Grasp" => Executable::action(|p: &Params, w: &mut WorldState| match target(p) {
            Ok(t) => w.act_grasp(t),
            Err(e) => fail(e),
        }),
        "Lift" => Executable::action(|_, w: &mut WorldState| w.act_lift()),
        "Place" => Executable::action(place),
        "Distance" => Executable::perception(|p: &Params, w: &WorldState| {
            let t = target(p).map_err(SensorError)?;
            w.sense_distance(t).map(Reading::Scalar)
        }),
        "GripForce" => Executable::perception(|_, w: &WorldState| Ok(Reading::Scalar(w.sense_grip_force()))),
        "ObjectDetection" => Executable::perception(|p: &Params, w: &WorldState| {
            let t = target(p).map_err(SensorError)?;
            Ok(Reading::Pose(w.sense_object_detection(t)))
        }),
        "VisualQA" => Executable::perception(|p: &Params, w: &WorldState| {
            let q = p
                .get("question")
                .ok_or_else(|| SensorError("missing question parameter".into()))?;
            w.sense_visual_qa(q).map(Reading::Flag)
        }),
        _ => return None,
    };
    Some(exe)
}

/// Fused conditions over the standard perception behaviors.
pub fn standard_conditions(config: &SimConfig) -> Vec<ConditionSpec> {
    let threshold = config.torque_threshold;
    let reach = config.reach;
    vec![
        ConditionSpec::new(
            "IsObjectHeld",
            "succeeds only if GripForce reports torque and VisualQA confirms the target is held",
            vec![
                ConditionMember::new(
                    "GripForce",
                    format!("torque > {threshold}"),
                    move |r| matches!(r, Reading::Scalar(t) if *t > threshold),
                ),
                ConditionMember::new("VisualQA", "answer is Yes", |r| matches!(r, Reading::Flag(true))).with_args(
                    |p: &Params| {
                        Params::new().with("question", QaTemplate::Held.question(p.get("target").unwrap_or("")))
                    },
                ),
            ],
        ),
        ConditionSpec::new(
            "ObjectVisible",
            "succeeds if ObjectDetection finds the target in the camera view",
            vec![ConditionMember::new("ObjectDetection", "target detected", |r| {
                matches!(r, Reading::Pose(Some(_)))
            })],
        ),
        ConditionSpec::new(
            "IsNear",
            format!("succeeds if Distance to the target is within arm reach ({reach} m)"),
            vec![ConditionMember::new(
                "Distance",
                format!("distance <= {reach}"),
                move |r| matches!(r, Reading::Scalar(d) if *d <= reach),
            )],
        ),
    ]
}

/// All nine behaviors bound to the simulator, plus the standard conditions.
pub fn standard_library(config: &SimConfig) -> BehaviorLibrary<WorldState> {
    build(standard_tags(), config).expect("standard library is consistent")
}

/// Binds the behaviors listed in a manifest. Conditions are registered when
/// all of their member behaviors are present.
pub fn library_from_manifest(text: &str, config: &SimConfig) -> Result<BehaviorLibrary<WorldState>, LibraryError> {
    build(parse_manifest(text)?, config)
}

fn build(tags: Vec<BehaviorTag>, config: &SimConfig) -> Result<BehaviorLibrary<WorldState>, LibraryError> {
    let mut library = BehaviorLibrary::new();
    for tag in tags {
        let exe = binding(&tag.name).ok_or_else(|| LibraryError::NoBinding(tag.name.clone()))?;
        library.register(tag, exe)?;
    }
    for spec in standard_conditions(config) {
        if spec.members.iter().all(|m| library.lookup(&m.behavior).is_some()) {
            library.register_condition(spec)?;
        }
    }
    Ok(library)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{evaluate_condition, write_manifest};
    use crate::sim::{FaultProfile, ObjectState};

    fn world() -> WorldState {
        let objects = vec![ObjectState {
            id: "cracker_box".into(),
            label: "cracker_box".into(),
            pose: Pose::new(0.6, 0.0, 0.8, 0.0),
            graspable: true,
        }];
        WorldState::new(
            SimConfig::default(),
            Pose::new(0.0, 0.0, 0.0, 0.0),
            objects,
            FaultProfile::none(1),
        )
        .unwrap()
    }

    #[test]
    fn nine_behaviors() {
        let lib = standard_library(&SimConfig::default());
        assert_eq!(lib.len(), 9);
        assert!(lib
            .tags_prompt_block()
            .contains("Grasp | action | moving gripper to a given pose and close it\n"));
        assert!(lib.condition("IsObjectHeld").is_some());
    }

    #[test]
    fn manifest_subset_drops_unsupported_conditions() {
        let tags: Vec<_> = standard_tags().into_iter().filter(|t| t.name != "VisualQA").collect();
        let lib = library_from_manifest(&write_manifest(&tags), &SimConfig::default()).unwrap();
        assert_eq!(lib.len(), 8);
        assert!(lib.condition("IsObjectHeld").is_none());
        assert!(lib.condition("ObjectVisible").is_some());
        assert_eq!(
            library_from_manifest("Fly|action|leaving the ground\n", &SimConfig::default()).unwrap_err(),
            LibraryError::NoBinding("Fly".into())
        );
    }

    #[test]
    fn is_object_held_fuses_torque_and_vqa() {
        let lib = standard_library(&SimConfig::default());
        let params = Params::new().with("target", "cracker_box");
        let mut w = world();
        assert_eq!(
            evaluate_condition(&lib, "IsObjectHeld", &params, &w),
            TickStatus::Failure
        );
        w.act_grasp("cracker_box");
        assert_eq!(w.sense_grip_force(), 2.5);
        assert_eq!(
            evaluate_condition(&lib, "IsObjectHeld", &params, &w),
            TickStatus::Success
        );
        // Torque gone while the oracle still answers Yes.
        w.robot.grip_torque = 0.0;
        assert_eq!(w.sense_visual_qa("Is the cracker_box held by the gripper?"), Ok(true));
        assert_eq!(
            evaluate_condition(&lib, "IsObjectHeld", &params, &w),
            TickStatus::Failure
        );
        assert_eq!(
            evaluate_condition(&lib, "IsObjectHeld", &Params::new(), &w),
            TickStatus::Failure
        );
    }

    #[test]
    fn place_in_base_frame() {
        let lib = standard_library(&SimConfig::default());
        let mut w = world();
        w.robot.base = Pose::new(1.0, 1.0, 0.0, std::f64::consts::FRAC_PI_2);
        let Executable::Action(f) = &lib.lookup("Place").unwrap().executable else {
            panic!()
        };
        let out = f(
            &Params::new()
                .with("x", "0.5")
                .with("y", "0")
                .with("z", "0.8")
                .with("frame", "base"),
            &mut w,
        );
        assert_eq!(out.status, TickStatus::Success);
        let g = w.gripper_pose();
        assert!((g.x - 1.0).abs() < 1e-12 && (g.y - 1.5).abs() < 1e-12 && g.z == 0.8);
        let out = f(&Params::new().with("x", "0.5"), &mut w);
        assert_eq!(out.status, TickStatus::Failure);
    }
}
