//! Human-skeleton retargeting for the front limbs.
//!
//! A human body frame is built from the shoulders and hips: origin at
//! mid-shoulder, `y` from the right to the left shoulder, `z` from mid-hip to
//! mid-shoulder (made orthogonal to `y`) and `x = y x z`, pointing out of the
//! chest. Wrists are expressed in that frame, scaled, and placed in the robot
//! base frame around the midpoint of the two front hip mounts. The robot
//! stands nose-up, so human up is base `+x`, human left is base `+y` and
//! human forward is base `-z`:
//!
//! ```text
//! toe = ref + s * (p.z, p.y, -p.x)
//! ```
//!
//! Targets outside the leg's workspace are projected onto it. The human left
//! arm drives FL and the right arm drives FR.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Parallelism;
use crate::robot_model::{Leg, ReachableToe, RobotModel};
use crate::target_gen::{MotionTarget, TargetTrack, TrackRow};

pub const LEFT_SHOULDER: &str = "left_shoulder";
pub const RIGHT_SHOULDER: &str = "right_shoulder";
pub const LEFT_WRIST: &str = "left_wrist";
pub const RIGHT_WRIST: &str = "right_wrist";
pub const LEFT_HIP: &str = "left_hip";
pub const RIGHT_HIP: &str = "right_hip";

pub const REQUIRED_LANDMARKS: [&str; 6] = [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_WRIST, RIGHT_WRIST, LEFT_HIP, RIGHT_HIP];

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("frame {frame}: missing landmark `{name}`")]
    MissingLandmark { frame: usize, name: &'static str },
    #[error("frame {frame}: {reason}")]
    DegenerateFrame { frame: usize, reason: &'static str },
    #[error("frame {frame}: timestamp {t} does not increase")]
    NonMonotonicTime { frame: usize, t: f64 },
    #[error("need at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
}

/// One skeleton sample. Landmarks are in metres in any world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFrame {
    pub t: f64,
    pub landmarks: BTreeMap<String, [f64; 3]>,
}

impl SkeletonFrame {
    fn landmark(&self, frame: usize, name: &'static str) -> Result<Vector3<f64>, RetargetError> {
        self.landmarks
            .get(name)
            .map(|p| Vector3::from(*p))
            .ok_or(RetargetError::MissingLandmark { frame, name })
    }

    /// Applies `p -> r p + shift` to every landmark.
    pub fn transformed(&self, r: &Matrix3<f64>, shift: &Vector3<f64>) -> Self {
        let landmarks = self
            .landmarks
            .iter()
            .map(|(k, p)| {
                let q = r * Vector3::from(*p) + shift;
                (k.clone(), [q.x, q.y, q.z])
            })
            .collect();
        Self { t: self.t, landmarks }
    }
}

/// Reads one JSON object per non-blank line:
/// `{"t": 0.0, "landmarks": {"left_wrist": [x, y, z], ...}}`.
pub fn parse_jsonl(text: &str) -> Result<Vec<SkeletonFrame>, RetargetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| RetargetError::Json { line: i + 1, source }))
        .collect()
}

pub fn to_jsonl(frames: &[SkeletonFrame]) -> String {
    frames
        .iter()
        .map(|f| serde_json::to_string(f).expect("frame serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetargetConfig {
    /// Robot reach over human reach. `None` estimates it from the clip.
    pub scale: Option<f64>,
    /// Output row spacing (s).
    pub sample_period: f64,
}

impl RetargetConfig {
    pub fn boxing() -> Self {
        Self {
            scale: None,
            sample_period: 0.1,
        }
    }

    pub fn ballet() -> Self {
        Self {
            scale: None,
            sample_period: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), RetargetError> {
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(RetargetError::Config(format!("sample_period {} must be positive", self.sample_period)));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(RetargetError::Config(format!("scale {s} must be positive")));
            }
        }
        Ok(())
    }
}

impl Default for RetargetConfig {
    fn default() -> Self {
        Self::boxing()
    }
}

/// Left and right wrist in the human body frame. `frame` only labels errors.
pub fn wrist_relative(frame: &SkeletonFrame, index: usize) -> Result<[Vector3<f64>; 2], RetargetError> {
    let get = |name| frame.landmark(index, name);
    let (ls, rs) = (get(LEFT_SHOULDER)?, get(RIGHT_SHOULDER)?);
    let (lw, rw) = (get(LEFT_WRIST)?, get(RIGHT_WRIST)?);
    let (lh, rh) = (get(LEFT_HIP)?, get(RIGHT_HIP)?);
    let degenerate = |reason| RetargetError::DegenerateFrame { frame: index, reason };

    let origin = (ls + rs) / 2.0;
    let across = ls - rs;
    if across.norm() < 1e-9 {
        return Err(degenerate("shoulders coincide"));
    }
    let y = across.normalize();
    let up = origin - (lh + rh) / 2.0;
    let z_raw = up - y * up.dot(&y);
    if z_raw.norm() < 1e-9 {
        return Err(degenerate("torso axis is parallel to the shoulder line"));
    }
    let z = z_raw.normalize();
    let x = y.cross(&z);
    let basis = Matrix3::from_columns(&[x, y, z]);
    Ok([basis.transpose() * (lw - origin), basis.transpose() * (rw - origin)])
}

/// Midpoint of the two front hip mounts, the image of a zero human vector.
pub fn reference_point(model: &RobotModel) -> Vector3<f64> {
    (model.leg(Leg::FL).hip_offset + model.leg(Leg::FR).hip_offset) / 2.0
}

/// Body-frame human vector to robot base frame, before scaling.
pub fn human_to_base(p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(p.z, p.y, -p.x)
}

/// Unprojected toe target for a scaled human vector.
pub fn raw_target(p_human: &Vector3<f64>, scale: f64, model: &RobotModel) -> Vector3<f64> {
    reference_point(model) + human_to_base(p_human) * scale
}

/// Scaled toe target, projected onto the leg's workspace when out of reach.
pub fn scale_to_robot(p_human: &Vector3<f64>, scale: f64, model: &RobotModel, leg: Leg) -> ReachableToe {
    model.nearest_reachable(leg, raw_target(p_human, scale, model))
}

/// Front-limb chain length over the longest shoulder-to-wrist distance in the clip.
pub fn estimate_scale(frames: &[SkeletonFrame], model: &RobotModel) -> Result<f64, RetargetError> {
    let mut reach: f64 = 0.0;
    for (i, f) in frames.iter().enumerate() {
        for (s, w) in [(LEFT_SHOULDER, LEFT_WRIST), (RIGHT_SHOULDER, RIGHT_WRIST)] {
            reach = reach.max((f.landmark(i, w)? - f.landmark(i, s)?).norm());
        }
    }
    if !(reach > 1e-6) {
        return Err(RetargetError::Config("arms have zero length, cannot estimate scale".into()));
    }
    let robot = model.leg(Leg::FL).chain_length().min(model.leg(Leg::FR).chain_length());
    Ok(robot / reach)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retargeted {
    pub track: TargetTrack,
    pub scale: f64,
    /// Rows where at least one toe had to be projected.
    pub clamped_rows: usize,
}

/// Resamples the clip every `sample_period` seconds from its first frame,
/// interpolating wrist vectors linearly, and emits a velocity-zero,
/// heading-hold track with reachable toe targets. Row `k` has `t = k * period`.
pub fn build_track(
    frames: &[SkeletonFrame],
    config: &RetargetConfig,
    model: &RobotModel,
    par: Parallelism,
) -> Result<Retargeted, RetargetError> {
    config.validate()?;
    if frames.len() < 2 {
        return Err(RetargetError::TooShort(frames.len()));
    }
    for (i, w) in frames.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(RetargetError::NonMonotonicTime { frame: i + 1, t: w[1].t });
        }
    }
    let wrists: Vec<[Vector3<f64>; 2]> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| wrist_relative(f, i))
        .collect::<Result<_, _>>()?;
    let scale = match config.scale {
        Some(s) => s,
        None => estimate_scale(frames, model)?,
    };

    let t0 = frames[0].t;
    let span = frames[frames.len() - 1].t - t0;
    let rows = (span / config.sample_period + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = frames.iter().map(|f| f.t - t0).collect();

    let results = par.map(rows, |k| {
        let t = k as f64 * config.sample_period;
        let p = interpolate(&times, &wrists, t);
        let fl = scale_to_robot(&p[0], scale, model, Leg::FL);
        let fr = scale_to_robot(&p[1], scale, model, Leg::FR);
        let clamped = [(&p[0], &fl), (&p[1], &fr)]
            .iter()
            .any(|(ph, r)| (r.vector() - raw_target(ph, scale, model)).norm() > 0.0);
        let target = MotionTarget {
            v_x: 0.0,
            v_y: 0.0,
            heading_des: 0.0,
            yaw_rate_obs: 0.0,
            toe_des: [fl.vector(), fr.vector()],
            toe_witness: Some([fl.angles, fr.angles]),
        };
        (TrackRow { t, target }, clamped)
    });
    let clamped_rows = results.iter().filter(|(_, c)| *c).count();
    Ok(Retargeted {
        track: TargetTrack {
            rows: results.into_iter().map(|(r, _)| r).collect(),
        },
        scale,
        clamped_rows,
    })
}

fn interpolate(times: &[f64], values: &[[Vector3<f64>; 2]], t: f64) -> [Vector3<f64>; 2] {
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last];
    }
    let hi = times.partition_point(|&s| s <= t).max(1);
    let lo = hi - 1;
    let w = (t - times[lo]) / (times[hi] - times[lo]);
    [0, 1].map(|a| values[lo][a] * (1.0 - w) + values[hi][a] * w)
}
