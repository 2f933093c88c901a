//! Deterministic kinematic simulation of a wheeled mobile manipulator and
//! tabletop objects.
//!
//! Actions mutate the [`WorldState`] and advance its step counter. Sensing
//! only borrows it; sensor noise is drawn from a generator keyed by
//! `(seed, step, channel, query)` so reading the world never changes it.

mod library;
mod scene;
mod snapshot;

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use library::{
    binding, library_from_manifest, param_signature, standard_conditions, standard_library, standard_tags, LibraryError,
};
pub use scene::{Scene, SceneError};
pub use snapshot::SnapshotError;

use crate::bt::TickStatus;
use crate::registry::{Outcome, SensorError, World};

/// Planar pose plus height. `yaw` is kept in (-π, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Pose {
            x,
            y,
            z,
            yaw: normalize_yaw(yaw),
        }
    }

    pub fn planar_distance(&self, other: &Pose) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Composes `offset` (expressed in this pose's frame) onto this pose.
    pub fn compose(&self, offset: &Pose) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose::new(
            self.x + c * offset.x - s * offset.y,
            self.y + s * offset.x + c * offset.y,
            self.z + offset.z,
            self.yaw + offset.yaw,
        )
    }

    /// Expresses `world` in this pose's frame; inverse of [`Pose::compose`].
    pub fn relative(&self, world: &Pose) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (world.x - self.x, world.y - self.y);
        Pose::new(
            c * dx + s * dy,
            -s * dx + c * dy,
            world.z - self.z,
            world.yaw - self.yaw,
        )
    }

    pub(crate) fn parse(text: &str) -> Option<Pose> {
        let v: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()?;
        match v.as_slice() {
            [x, y, z, yaw] => Some(Pose::new(*x, *y, *z, *yaw)),
            _ => None,
        }
    }
}

impl fmt::Display for Pose {
    /// `x,y,z,yaw` with shortest round-trip float formatting.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.z, self.yaw)
    }
}

pub fn normalize_yaw(yaw: f64) -> f64 {
    if yaw > -PI && yaw <= PI {
        return yaw;
    }
    let r = (yaw + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultProfile {
    pub p_grasp_slip: f64,
    pub p_detect_miss: f64,
    pub p_vqa_error: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("fault probability {name}={value} is outside [0, 1]")]
pub struct FaultProfileError {
    pub name: &'static str,
    pub value: f64,
}

impl FaultProfile {
    pub fn new(p_grasp_slip: f64, p_detect_miss: f64, p_vqa_error: f64, seed: u64) -> Result<Self, FaultProfileError> {
        let profile = FaultProfile {
            p_grasp_slip,
            p_detect_miss,
            p_vqa_error,
            seed,
        };
        profile.check()?;
        Ok(profile)
    }

    /// No faults.
    pub fn none(seed: u64) -> Self {
        FaultProfile {
            p_grasp_slip: 0.0,
            p_detect_miss: 0.0,
            p_vqa_error: 0.0,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        FaultProfile { seed, ..self }
    }

    pub fn check(&self) -> Result<(), FaultProfileError> {
        for (name, value) in [
            ("p_grasp_slip", self.p_grasp_slip),
            ("p_detect_miss", self.p_detect_miss),
            ("p_vqa_error", self.p_vqa_error),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(FaultProfileError { name, value });
            }
        }
        Ok(())
    }

    /// Sets one probability by its config key.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), String> {
        let slot = match key {
            "p_grasp_slip" => &mut self.p_grasp_slip,
            "p_detect_miss" => &mut self.p_detect_miss,
            "p_vqa_error" => &mut self.p_vqa_error,
            other => return Err(format!("unknown fault key {other}")),
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(format!("{key}={value} is outside [0, 1]"));
        }
        *slot = value;
        Ok(())
    }
}

impl Default for FaultProfile {
    fn default() -> Self {
        FaultProfile::none(0)
    }
}

/// Geometry and sensor constants of the simulated robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Max planar distance from the base at which the arm can grasp or place.
    pub reach: f64,
    pub camera_range: f64,
    /// N·m reported while an object is held.
    pub holding_torque: f64,
    pub chest_height: f64,
    /// Base travel per simulation step, meters.
    pub base_step: f64,
    pub default_standoff: f64,
    pub arrival_tolerance: f64,
    /// Grip torque above this counts as holding something.
    pub torque_threshold: f64,
    /// Gripper pose relative to the base in the homing configuration.
    pub home_offset: Pose,
    /// Forward reach of the gripper when lifted to the chest.
    pub lift_forward: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            reach: 0.8,
            camera_range: 4.0,
            holding_torque: 2.5,
            chest_height: 1.2,
            base_step: 0.1,
            default_standoff: 0.5,
            arrival_tolerance: 0.01,
            torque_threshold: 0.1,
            home_offset: Pose::new(0.3, 0.0, 1.0, 0.0),
            lift_forward: 0.35,
        }
    }
}

impl SimConfig {
    pub fn lift_offset(&self) -> Pose {
        Pose::new(self.lift_forward, 0.0, self.chest_height, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub base: Pose,
    /// Gripper pose relative to the base.
    pub gripper_offset: Pose,
    pub gripper_open: bool,
    pub grip_torque: f64,
    pub held_object: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    pub id: String,
    pub label: String,
    pub pose: Pose,
    pub graspable: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("duplicate object id {0}")]
    DuplicateObject(String),
    #[error("object {0} is below the floor")]
    BelowFloor(String),
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error(transparent)]
    Faults(#[from] FaultProfileError),
}

/// Questions the visual Q&A oracle understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QaTemplate {
    /// "Is the X held by the gripper?" / "Is the X being held?"
    Held,
    /// "Is the X on the table?"
    OnTable,
    /// "Is the X near the robot?"
    Near,
}

impl QaTemplate {
    /// Renders the canonical question for a target.
    pub fn question(self, target: &str) -> String {
        match self {
            QaTemplate::Held => format!("Is the {target} held by the gripper?"),
            QaTemplate::OnTable => format!("Is the {target} on the table?"),
            QaTemplate::Near => format!("Is the {target} near the robot?"),
        }
    }

    pub fn parse(question: &str) -> Option<(QaTemplate, String)> {
        let q = question.trim().trim_end_matches('?').trim().to_ascii_lowercase();
        let rest = q.strip_prefix("is the ")?;
        const FORMS: [(&str, QaTemplate); 5] = [
            (" held by the gripper", QaTemplate::Held),
            (" being held", QaTemplate::Held),
            (" held", QaTemplate::Held),
            (" on the table", QaTemplate::OnTable),
            (" near the robot", QaTemplate::Near),
        ];
        FORMS.iter().find_map(|(suffix, t)| {
            rest.strip_suffix(suffix)
                .map(str::trim)
                .filter(|target| !target.is_empty())
                .map(|target| (*t, target.to_string()))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub config: SimConfig,
    pub robot: RobotState,
    pub objects: Vec<ObjectState>,
    step_count: u64,
    rng: ChaCha8Rng,
    faults: FaultProfile,
}

impl World for WorldState {
    fn step_index(&self) -> u64 {
        self.step_count
    }

    fn snapshot(&self) -> String {
        WorldState::snapshot(self)
    }
}

pub(crate) fn valid_ident(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == '|' || c == '=')
}

impl WorldState {
    /// Robot at `base` in the homing configuration, gripper open and empty.
    pub fn new(
        config: SimConfig,
        base: Pose,
        objects: Vec<ObjectState>,
        faults: FaultProfile,
    ) -> Result<Self, WorldError> {
        faults.check()?;
        for (i, o) in objects.iter().enumerate() {
            if !valid_ident(&o.id) {
                return Err(WorldError::InvalidId(o.id.clone()));
            }
            if !valid_ident(&o.label) {
                return Err(WorldError::InvalidId(o.label.clone()));
            }
            if o.pose.z < 0.0 {
                return Err(WorldError::BelowFloor(o.id.clone()));
            }
            if objects[..i].iter().any(|p| p.id == o.id) {
                return Err(WorldError::DuplicateObject(o.id.clone()));
            }
        }
        Ok(WorldState {
            robot: RobotState {
                base,
                gripper_offset: config.home_offset,
                gripper_open: true,
                grip_torque: 0.0,
                held_object: None,
            },
            config,
            objects,
            step_count: 0,
            rng: ChaCha8Rng::seed_from_u64(faults.seed),
            faults,
        })
    }

    pub fn from_scene(scene: &Scene, config: SimConfig, faults: FaultProfile) -> Result<Self, WorldError> {
        WorldState::new(config, scene.robot, scene.objects.clone(), faults)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn faults(&self) -> &FaultProfile {
        &self.faults
    }

    pub fn gripper_pose(&self) -> Pose {
        self.robot.base.compose(&self.robot.gripper_offset)
    }

    pub fn object(&self, id: &str) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Resolves a behavior target: exact id, then exact label, then a
    /// case/space-insensitive match on either. Among label matches the one
    /// nearest to the base wins.
    pub fn find_object(&self, target: &str) -> Option<usize> {
        if let Some(i) = self.objects.iter().position(|o| o.id == target) {
            return Some(i);
        }
        let norm = |s: &str| s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let wanted = norm(target);
        let nearest = |pred: &dyn Fn(&ObjectState) -> bool| {
            self.objects
                .iter()
                .enumerate()
                .filter(|(_, o)| pred(o))
                .min_by(|(_, a), (_, b)| {
                    let da = self.robot.base.planar_distance(&a.pose);
                    let db = self.robot.base.planar_distance(&b.pose);
                    da.total_cmp(&db)
                })
                .map(|(i, _)| i)
        };
        nearest(&|o| o.label == target).or_else(|| nearest(&|o| norm(&o.id) == wanted || norm(&o.label) == wanted))
    }

    fn advance(&mut self) {
        self.step_count += 1;
    }

    fn sync_held(&mut self) {
        if let Some(id) = self.robot.held_object.clone() {
            let pose = self.gripper_pose();
            if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
                o.pose = pose;
            }
        }
    }

    fn release(&mut self, at: Option<Pose>) {
        if let Some(id) = self.robot.held_object.take() {
            let pose = at.unwrap_or_else(|| self.gripper_pose());
            if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
                o.pose = pose;
            }
        }
        self.robot.gripper_open = true;
        self.robot.grip_torque = 0.0;
    }

    /// Moves the gripper to the home configuration and opens it, releasing
    /// anything held where it is. A no-op when already home.
    pub fn act_homing(&mut self) -> Outcome {
        let r = &self.robot;
        if r.gripper_offset == self.config.home_offset && r.gripper_open && r.held_object.is_none() {
            return Outcome::new(TickStatus::Success, "already home");
        }
        self.release(None);
        self.robot.gripper_offset = self.config.home_offset;
        self.advance();
        Outcome::new(TickStatus::Success, "homed")
    }

    /// Drives the base toward the target one step at a time, facing it,
    /// until the planar distance equals `standoff`.
    pub fn act_approach(&mut self, target: &str, standoff: f64) -> Outcome {
        let Some(i) = self.find_object(target) else {
            return Outcome::new(TickStatus::Failure, format!("unknown target {target}"));
        };
        if !standoff.is_finite() || standoff < 0.0 {
            return Outcome::new(TickStatus::Failure, format!("invalid standoff {standoff}"));
        }
        let goal = self.objects[i].pose;
        let base = self.robot.base;
        let distance = base.planar_distance(&goal);
        let remaining = distance - standoff;
        let tol = self.config.arrival_tolerance;
        if remaining <= tol {
            return Outcome::new(TickStatus::Success, format!("within standoff d={distance:.3}"));
        }
        let travel = remaining.min(self.config.base_step);
        let (dx, dy) = ((goal.x - base.x) / distance, (goal.y - base.y) / distance);
        self.robot.base = Pose::new(base.x + dx * travel, base.y + dy * travel, base.z, dy.atan2(dx));
        self.sync_held();
        self.advance();
        let left = self.robot.base.planar_distance(&goal) - standoff;
        if left <= tol {
            Outcome::new(TickStatus::Success, format!("arrived d={:.3}", left + standoff))
        } else {
            Outcome::new(TickStatus::Running, format!("moving d={:.3}", left + standoff))
        }
    }

    /// Moves the gripper onto the target and closes it. A slip leaves the
    /// gripper closed and empty yet still reports Success.
    pub fn act_grasp(&mut self, target: &str) -> Outcome {
        let Some(i) = self.find_object(target) else {
            return Outcome::new(TickStatus::Failure, format!("unknown target {target}"));
        };
        if let Some(held) = &self.robot.held_object {
            return Outcome::new(TickStatus::Failure, format!("already holding {held}"));
        }
        let object = self.objects[i].clone();
        let distance = self.robot.base.planar_distance(&object.pose);
        if distance > self.config.reach {
            self.advance();
            return Outcome::new(TickStatus::Failure, format!("out of reach d={distance:.3}"));
        }
        if !object.graspable {
            self.advance();
            return Outcome::new(TickStatus::Failure, format!("{} is not graspable", object.id));
        }
        self.robot.gripper_offset = self.robot.base.relative(&object.pose);
        self.robot.gripper_open = false;
        let roll: f64 = self.rng.gen();
        self.advance();
        if roll < self.faults.p_grasp_slip {
            self.robot.grip_torque = 0.0;
            self.robot.held_object = None;
            Outcome::new(
                TickStatus::Success,
                format!("closed on {} (slipped) roll={roll:.4}", object.id),
            )
        } else {
            self.robot.grip_torque = self.config.holding_torque;
            self.robot.held_object = Some(object.id.clone());
            self.sync_held();
            Outcome::new(TickStatus::Success, format!("holding {} roll={roll:.4}", object.id))
        }
    }

    /// Raises the gripper to the chest; a held object comes along.
    pub fn act_lift(&mut self) -> Outcome {
        self.robot.gripper_offset = self.config.lift_offset();
        self.sync_held();
        self.advance();
        match &self.robot.held_object {
            Some(id) => Outcome::new(TickStatus::Success, format!("lifted {id}")),
            None => Outcome::new(TickStatus::Success, "lifted empty gripper"),
        }
    }

    /// Moves the gripper to a world point within reach and opens it.
    pub fn act_place(&mut self, x: f64, y: f64, z: f64) -> Outcome {
        let base = self.robot.base;
        let distance = (x - base.x).hypot(y - base.y);
        if distance > self.config.reach || z < 0.0 {
            self.advance();
            return Outcome::new(TickStatus::Failure, format!("place point out of reach d={distance:.3}"));
        }
        let yaw = self.gripper_pose().yaw;
        let at = Pose::new(x, y, z, yaw);
        self.robot.gripper_offset = base.relative(&at);
        let released = self.robot.held_object.clone();
        self.release(Some(at));
        self.advance();
        match released {
            Some(id) => Outcome::new(TickStatus::Success, format!("placed {id}")),
            None => Outcome::new(TickStatus::Success, "opened empty gripper"),
        }
    }

    pub fn sense_distance(&self, target: &str) -> Result<f64, SensorError> {
        let i = self
            .find_object(target)
            .ok_or_else(|| SensorError(format!("unknown target {target}")))?;
        Ok(self.robot.base.planar_distance(&self.objects[i].pose))
    }

    pub fn sense_grip_force(&self) -> f64 {
        self.robot.grip_torque
    }

    /// Whether the object is inside the camera's range and forward half-plane.
    pub fn in_view(&self, object: &ObjectState) -> bool {
        let base = &self.robot.base;
        let (dx, dy) = (object.pose.x - base.x, object.pose.y - base.y);
        let (s, c) = base.yaw.sin_cos();
        dx.hypot(dy) <= self.config.camera_range && dx * c + dy * s >= 0.0
    }

    /// Pose of the nearest visible object matching `target`, or `None` on a
    /// miss (nothing in view, or an injected detection miss).
    pub fn sense_object_detection(&self, target: &str) -> Option<Pose> {
        let norm = |s: &str| s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let wanted = norm(target);
        let base = self.robot.base;
        let object = self
            .objects
            .iter()
            .filter(|o| {
                (o.id == target || o.label == target || norm(&o.label) == wanted || norm(&o.id) == wanted)
                    && self.in_view(o)
            })
            .min_by(|a, b| base.planar_distance(&a.pose).total_cmp(&base.planar_distance(&b.pose)))?;
        if self.perception_draw("detect", target) < self.faults.p_detect_miss {
            return None;
        }
        Some(object.pose)
    }

    /// Ground-truth answer to a templated question.
    pub fn visual_qa_truth(&self, question: &str) -> Result<bool, SensorError> {
        let (template, target) =
            QaTemplate::parse(question).ok_or_else(|| SensorError(format!("unsupported question {question:?}")))?;
        let i = self
            .find_object(&target)
            .ok_or_else(|| SensorError(format!("unknown object {target:?} in question")))?;
        let object = &self.objects[i];
        Ok(match template {
            QaTemplate::Held => self.robot.held_object.as_deref() == Some(object.id.as_str()),
            QaTemplate::OnTable => self.robot.held_object.as_deref() != Some(object.id.as_str()) && object.pose.z > 0.0,
            QaTemplate::Near => self.robot.base.planar_distance(&object.pose) <= self.config.reach,
        })
    }

    /// Ground truth, flipped with probability `p_vqa_error`.
    pub fn sense_visual_qa(&self, question: &str) -> Result<bool, SensorError> {
        let truth = self.visual_qa_truth(question)?;
        let flip = self.perception_draw("vqa", question.trim()) < self.faults.p_vqa_error;
        Ok(truth != flip)
    }

    /// Uniform draw in [0, 1) that depends only on the seed, the current
    /// step and the query.
    fn perception_draw(&self, channel: &str, key: &str) -> f64 {
        let mut h = Sha256::new();
        h.update(self.faults.seed.to_le_bytes());
        h.update(self.step_count.to_le_bytes());
        h.update(channel.as_bytes());
        h.update([0u8]);
        h.update(key.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed).gen()
    }

    /// Hex SHA-256 of the canonical snapshot.
    pub fn state_hash(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot().as_bytes()))
    }
}
