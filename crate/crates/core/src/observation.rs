//! Policy observation window and the PD actuation contract.
//!
//! One frame is 39 numbers, flattened in this order:
//!
//! | offset | len | field                                                   |
//! |-------:|----:|---------------------------------------------------------|
//! | 0      | 12  | joint positions, FL/FR/RL/RR x hip/thigh/calf (rad)     |
//! | 12     | 3   | world (0, 0, -1) expressed in the base frame            |
//! | 15     | 3   | world (1, 0, 0) expressed in the base frame             |
//! | 18     | 12  | last applied PD targets, same joint order (rad)         |
//! | 30     | 2   | desired base linear velocity x, y (m/s)                 |
//! | 32     | 1   | desired yaw rate (rad/s)                                |
//! | 33     | 3   | desired FL toe position, base frame (m)                 |
//! | 36     | 3   | desired FR toe position, base frame (m)                 |
//!
//! The window concatenates the frames at `t - 0.04 s`, `t - 0.02 s` and `t`,
//! oldest first, for 117 numbers.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::robot_model::{JointId, JointVector, NUM_JOINTS};

pub const CONTROL_RATE_HZ: f64 = 50.0;
pub const CONTROL_DT: f64 = 0.02;
pub const DEFAULT_KP: f64 = 30.0;
pub const DEFAULT_KD: f64 = 3.0;
/// Frame ages in the window, oldest first (s).
pub const FRAME_OFFSETS: [f64; 3] = [0.04, 0.02, 0.0];
pub const FRAME_LEN: usize = 39;
pub const WINDOW_LEN: usize = FRAME_LEN * FRAME_OFFSETS.len();

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ObservationError {
    #[error("orientation quaternion is not unit length (norm {0})")]
    NonUnitQuaternion(f64),
    #[error("observation history spans {span:.4} s, need at least {needed:.4} s")]
    InsufficientHistory { span: f64, needed: f64 },
    #[error("history timestamps must strictly increase ({previous} then {next})")]
    NonMonotonicTime { previous: f64, next: f64 },
}

/// Base-frame images of the world down vector and world x axis.
pub fn encode_orientation(orientation: &Quaternion<f64>) -> Result<[Vector3<f64>; 2], ObservationError> {
    let norm = orientation.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(ObservationError::NonUnitQuaternion(norm));
    }
    let q = UnitQuaternion::new_unchecked(*orientation);
    Ok(encode_unit_orientation(&q))
}

pub fn encode_unit_orientation(q: &UnitQuaternion<f64>) -> [Vector3<f64>; 2] {
    let inv = q.inverse();
    [inv * Vector3::new(0.0, 0.0, -1.0), inv * Vector3::new(1.0, 0.0, 0.0)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSnapshot {
    pub joint_positions: JointVector,
    /// `[gravity projection, forward projection]`, each unit length.
    pub orientation_encoding: [Vector3<f64>; 2],
    pub last_action: JointVector,
    pub desired_lin_vel: [f64; 2],
    pub desired_ang_vel: f64,
    /// FL then FR.
    pub desired_front_toes: [Vector3<f64>; 2],
}

impl FrameSnapshot {
    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.joint_positions.0);
        for v in &self.orientation_encoding {
            out.extend_from_slice(v.as_slice());
        }
        out.extend_from_slice(&self.last_action.0);
        out.extend_from_slice(&self.desired_lin_vel);
        out.push(self.desired_ang_vel);
        for v in &self.desired_front_toes {
            out.extend_from_slice(v.as_slice());
        }
    }
}

/// Names of every element of the flattened window, in order.
pub fn window_field_names() -> Vec<String> {
    let mut names = Vec::with_capacity(WINDOW_LEN);
    for offset in FRAME_OFFSETS {
        let tag = if offset == 0.0 {
            "t".to_string()
        } else {
            format!("t-{offset:.2}")
        };
        for i in 0..NUM_JOINTS {
            names.push(format!("{tag}/joint_pos/{}", JointId::from_index(i)));
        }
        for axis in ["x", "y", "z"] {
            names.push(format!("{tag}/gravity_proj/{axis}"));
        }
        for axis in ["x", "y", "z"] {
            names.push(format!("{tag}/forward_proj/{axis}"));
        }
        for i in 0..NUM_JOINTS {
            names.push(format!("{tag}/last_action/{}", JointId::from_index(i)));
        }
        names.push(format!("{tag}/desired_lin_vel/x"));
        names.push(format!("{tag}/desired_lin_vel/y"));
        names.push(format!("{tag}/desired_yaw_rate"));
        for toe in ["fl", "fr"] {
            for axis in ["x", "y", "z"] {
                names.push(format!("{tag}/desired_toe_{toe}/{axis}"));
            }
        }
    }
    names
}

/// Timed frame buffer, single writer. Old frames are dropped once they are
/// no longer needed for a window.
#[derive(Debug, Clone, Default)]
pub struct ObservationHistory {
    frames: Vec<(f64, FrameSnapshot)>,
}

impl ObservationHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, frame: FrameSnapshot) -> Result<(), ObservationError> {
        if let Some((last, _)) = self.frames.last() {
            if t <= *last {
                return Err(ObservationError::NonMonotonicTime { previous: *last, next: t });
            }
        }
        self.frames.push((t, frame));
        // Keep one sample older than the oldest offset for nearest selection.
        let horizon = t - FRAME_OFFSETS[0] - 0.1;
        let keep_from = self
            .frames
            .iter()
            .rposition(|(ts, _)| *ts <= horizon)
            .unwrap_or(0);
        if keep_from > 0 {
            self.frames.drain(..keep_from);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[(f64, FrameSnapshot)] {
        &self.frames
    }
}

/// Flattened 3-frame window ending at the newest sample. Past frames use the
/// nearest sample to `t - offset` (earlier sample on ties).
pub fn build_observation(history: &ObservationHistory) -> Result<Vec<f64>, ObservationError> {
    build_observation_from(history.frames())
}

pub fn build_observation_from(frames: &[(f64, FrameSnapshot)]) -> Result<Vec<f64>, ObservationError> {
    let needed = FRAME_OFFSETS[0];
    let (Some((t_first, _)), Some((t_last, _))) = (frames.first(), frames.last()) else {
        return Err(ObservationError::InsufficientHistory { span: 0.0, needed });
    };
    let span = t_last - t_first;
    if span + TIME_EPS < needed {
        return Err(ObservationError::InsufficientHistory { span, needed });
    }
    let mut out = Vec::with_capacity(WINDOW_LEN);
    for offset in FRAME_OFFSETS {
        let want = t_last - offset;
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (i, (ts, _)) in frames.iter().enumerate() {
            let d = (ts - want).abs();
            if d < best_dist - TIME_EPS {
                best = i;
                best_dist = d;
            }
        }
        frames[best].1.write_into(&mut out);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp: DEFAULT_KP,
            kd: DEFAULT_KD,
        }
    }
}

/// PD targets emitted at the 50 Hz control rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionCommand {
    pub pd_targets: JointVector,
}

impl ActionCommand {
    pub const PERIOD: f64 = CONTROL_DT;

    pub fn new(pd_targets: JointVector) -> Option<Self> {
        pd_targets
            .0
            .iter()
            .all(|v| v.is_finite())
            .then_some(Self { pd_targets })
    }
}

/// `kp * (target - q) - kd * qd` before clamping.
pub fn pd_torque_unclamped(q: &JointVector, qd: &JointVector, target: &JointVector, gains: PdGains) -> [f64; NUM_JOINTS] {
    std::array::from_fn(|i| gains.kp * (target.0[i] - q.0[i]) - gains.kd * qd.0[i])
}

/// PD torque clamped per joint to `torque_limits`.
pub fn pd_torque(
    q: &JointVector,
    qd: &JointVector,
    target: &JointVector,
    gains: PdGains,
    torque_limits: &[f64; NUM_JOINTS],
) -> [f64; NUM_JOINTS] {
    let mut tau = pd_torque_unclamped(q, qd, target, gains);
    for (t, lim) in tau.iter_mut().zip(torque_limits) {
        *t = t.clamp(-lim, *lim);
    }
    tau
}
