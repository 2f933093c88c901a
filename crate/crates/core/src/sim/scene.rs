//! Scene files.
//!
//! ```text
//! # desk scene
//! robot|0,0,0,0
//! object|cracker_box|cracker_box|2.0,-0.3,0.8,0|true
//! ```

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{valid_ident, ObjectState, Pose};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scene line {line}: {message}")]
pub struct SceneError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub robot: Pose,
    pub objects: Vec<ObjectState>,
}

impl Scene {
    pub fn parse(text: &str) -> Result<Scene, SceneError> {
        let mut robot = None;
        let mut objects: Vec<ObjectState> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let fail = |message: String| SceneError { line, message };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('|').map(str::trim).collect();
            match fields.as_slice() {
                ["robot", pose] => {
                    if robot.is_some() {
                        return Err(fail("robot declared twice".into()));
                    }
                    robot = Some(Pose::parse(pose).ok_or_else(|| fail(format!("bad pose {pose:?}")))?);
                }
                ["object", id, label, pose, graspable] => {
                    if !valid_ident(id) || !valid_ident(label) {
                        return Err(fail("object id and label must be non-empty without spaces".into()));
                    }
                    if objects.iter().any(|o| o.id == *id) {
                        return Err(fail(format!("duplicate object id {id}")));
                    }
                    let pose = Pose::parse(pose).ok_or_else(|| fail(format!("bad pose {pose:?}")))?;
                    if pose.z < 0.0 {
                        return Err(fail(format!("object {id} is below the floor")));
                    }
                    let graspable = graspable
                        .parse::<bool>()
                        .map_err(|_| fail(format!("graspable must be true or false, got {graspable:?}")))?;
                    objects.push(ObjectState {
                        id: id.to_string(),
                        label: label.to_string(),
                        pose,
                        graspable,
                    });
                }
                _ => return Err(fail(format!("unrecognised record {trimmed:?}"))),
            }
        }
        let robot = robot.ok_or(SceneError {
            line: 0,
            message: "scene has no robot record".into(),
        })?;
        Ok(Scene { robot, objects })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("robot|{}\n", self.robot);
        for o in &self.objects {
            let _ = writeln!(out, "object|{}|{}|{}|{}", o.id, o.label, o.pose, o.graspable);
        }
        out
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn labels(&self) -> Vec<&str> {
        self.objects
            .iter()
            .filter(|o| o.graspable)
            .map(|o| o.label.as_str())
            .collect()
    }
}
