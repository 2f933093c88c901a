//! Canonical text record of a [`WorldState`], including generator position.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{valid_ident, FaultProfile, ObjectState, Pose, RobotState, SimConfig, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("snapshot line {line}: {message}")]
pub struct SnapshotError {
    pub line: usize,
    pub message: String,
}

const HEADER: &str = "world v1";

impl WorldState {
    /// Equal worlds give equal bytes.
    pub fn snapshot(&self) -> String {
        let c = &self.config;
        let r = &self.robot;
        let f = &self.faults;
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        out.push_str(&format!("step={}\n", self.step_count));
        out.push_str(&format!(
            "faults p_grasp_slip={} p_detect_miss={} p_vqa_error={} seed={}\n",
            f.p_grasp_slip, f.p_detect_miss, f.p_vqa_error, f.seed
        ));
        out.push_str(&format!(
            "rng key={} stream={} word_pos={}\n",
            hex::encode(self.rng.get_seed()),
            self.rng.get_stream(),
            self.rng.get_word_pos()
        ));
        out.push_str(&format!(
            "config reach={} camera_range={} holding_torque={} chest_height={} base_step={} default_standoff={} arrival_tolerance={} torque_threshold={} home_offset={} lift_forward={}\n",
            c.reach, c.camera_range, c.holding_torque, c.chest_height, c.base_step,
            c.default_standoff, c.arrival_tolerance, c.torque_threshold, c.home_offset, c.lift_forward
        ));
        out.push_str(&format!(
            "robot base={} gripper={} open={} torque={} held={}\n",
            r.base,
            r.gripper_offset,
            r.gripper_open,
            r.grip_torque,
            r.held_object.as_deref().unwrap_or("-")
        ));
        for o in &self.objects {
            out.push_str(&format!(
                "object id={} label={} pose={} graspable={}\n",
                o.id, o.label, o.pose, o.graspable
            ));
        }
        out
    }

    pub fn restore(record: &str) -> Result<WorldState, SnapshotError> {
        let mut lines = record.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(err(1, format!("expected {HEADER:?} header"))),
        }
        let mut step = None;
        let mut faults = None;
        let mut rng = None;
        let mut config = None;
        let mut robot = None;
        let mut objects = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (head, fields) = split_record(n, line)?;
            match head {
                "step" => step = Some(fields.u64(n, "step")?),
                "faults" => {
                    faults = Some(FaultProfile {
                        p_grasp_slip: fields.f64(n, "p_grasp_slip")?,
                        p_detect_miss: fields.f64(n, "p_detect_miss")?,
                        p_vqa_error: fields.f64(n, "p_vqa_error")?,
                        seed: fields.u64(n, "seed")?,
                    })
                }
                "rng" => {
                    let key = hex::decode(fields.get(n, "key")?)
                        .ok()
                        .and_then(|k| <[u8; 32]>::try_from(k).ok())
                        .ok_or_else(|| err(n, "rng key must be 32 hex bytes"))?;
                    let mut g = ChaCha8Rng::from_seed(key);
                    g.set_stream(fields.u64(n, "stream")?);
                    let pos = fields
                        .get(n, "word_pos")?
                        .parse::<u128>()
                        .map_err(|_| err(n, "bad word_pos"))?;
                    g.set_word_pos(pos);
                    rng = Some(g);
                }
                "config" => {
                    config = Some(SimConfig {
                        reach: fields.f64(n, "reach")?,
                        camera_range: fields.f64(n, "camera_range")?,
                        holding_torque: fields.f64(n, "holding_torque")?,
                        chest_height: fields.f64(n, "chest_height")?,
                        base_step: fields.f64(n, "base_step")?,
                        default_standoff: fields.f64(n, "default_standoff")?,
                        arrival_tolerance: fields.f64(n, "arrival_tolerance")?,
                        torque_threshold: fields.f64(n, "torque_threshold")?,
                        home_offset: fields.pose(n, "home_offset")?,
                        lift_forward: fields.f64(n, "lift_forward")?,
                    })
                }
                "robot" => {
                    let held = fields.get(n, "held")?;
                    robot = Some(RobotState {
                        base: fields.pose(n, "base")?,
                        gripper_offset: fields.pose(n, "gripper")?,
                        gripper_open: fields.bool(n, "open")?,
                        grip_torque: fields.f64(n, "torque")?,
                        held_object: (held != "-").then(|| held.to_string()),
                    })
                }
                "object" => {
                    let id = fields.get(n, "id")?;
                    let label = fields.get(n, "label")?;
                    if !valid_ident(id) || !valid_ident(label) {
                        return Err(err(n, "invalid object id or label"));
                    }
                    objects.push(ObjectState {
                        id: id.to_string(),
                        label: label.to_string(),
                        pose: fields.pose(n, "pose")?,
                        graspable: fields.bool(n, "graspable")?,
                    })
                }
                other => return Err(err(n, format!("unknown record {other:?}"))),
            }
        }
        let missing = |what: &str| err(0, format!("missing {what} record"));
        let faults = faults.ok_or_else(|| missing("faults"))?;
        faults.check().map_err(|e| err(0, e.to_string()))?;
        Ok(WorldState {
            config: config.ok_or_else(|| missing("config"))?,
            robot: robot.ok_or_else(|| missing("robot"))?,
            objects,
            step_count: step.ok_or_else(|| missing("step"))?,
            rng: rng.ok_or_else(|| missing("rng"))?,
            faults,
        })
    }
}

fn err(line: usize, message: impl Into<String>) -> SnapshotError {
    SnapshotError {
        line,
        message: message.into(),
    }
}

struct Fields<'a>(HashMap<&'a str, &'a str>);

fn split_record(n: usize, line: &str) -> Result<(&str, Fields<'_>), SnapshotError> {
    let mut tokens = line.split_whitespace();
    let first = tokens.next().unwrap_or_default();
    // `step=N` is a single-field record.
    if let Some((key, value)) = first.split_once('=') {
        return Ok((key, Fields(HashMap::from([(key, value)]))));
    }
    let mut map = HashMap::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| err(n, format!("expected key=value, got {t:?}")))?;
        map.insert(k, v);
    }
    Ok((first, Fields(map)))
}

impl<'a> Fields<'a> {
    fn get(&self, n: usize, key: &str) -> Result<&'a str, SnapshotError> {
        self.0
            .get(key)
            .copied()
            .ok_or_else(|| err(n, format!("missing field {key}")))
    }

    fn f64(&self, n: usize, key: &str) -> Result<f64, SnapshotError> {
        self.get(n, key)?
            .parse()
            .map_err(|_| err(n, format!("field {key} is not a number")))
    }

    fn u64(&self, n: usize, key: &str) -> Result<u64, SnapshotError> {
        self.get(n, key)?
            .parse()
            .map_err(|_| err(n, format!("field {key} is not an integer")))
    }

    fn bool(&self, n: usize, key: &str) -> Result<bool, SnapshotError> {
        self.get(n, key)?
            .parse()
            .map_err(|_| err(n, format!("field {key} is not a boolean")))
    }

    fn pose(&self, n: usize, key: &str) -> Result<Pose, SnapshotError> {
        Pose::parse(self.get(n, key)?).ok_or_else(|| err(n, format!("field {key} is not x,y,z,yaw")))
    }
}
