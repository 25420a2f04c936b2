//! Episodes on the planar model, scored by the full reward engine.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::model::{
    ContactPoint, PlanarError, PlanarModel, PlanarParams, PlanarState, FRONT_ELBOW, FRONT_SHOULDER, HIND_HIP, HIND_KNEE,
    NA, NC, NQ, PITCH, X, Z,
};
use super::policy::PlanarPolicy;
use crate::observation::CONTROL_DT;
use crate::reward::{EnvState, RewardBreakdown, RewardConfig, RewardEngine, TerminationReason};
use crate::robot_model::{BasePose, JointId, JointKind, JointVector, Leg, RobotModel, NUM_LEGS};
use crate::target_gen::MotionTarget;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarEnvConfig {
    pub params: PlanarParams,
    /// Episode length cap; replaces the reward config's step limit.
    pub max_steps: u64,
    pub discount: f64,
    /// Policy targets stay this far inside the joint limits (rad).
    pub target_margin: f64,
}

impl Default for PlanarEnvConfig {
    fn default() -> Self {
        Self {
            params: PlanarParams::default(),
            max_steps: 150,
            discount: 0.99,
            target_margin: 0.02,
        }
    }
}

/// Something that maps time and state to four joint targets.
pub trait Controller {
    fn targets(&self, env: &PlanarEnv, t: f64, state: &PlanarState) -> [f64; NA];
}

impl Controller for PlanarPolicy {
    fn targets(&self, env: &PlanarEnv, t: f64, state: &PlanarState) -> [f64; NA] {
        PlanarPolicy::targets(
            self,
            t,
            state,
            &env.model.nominal,
            &env.model.limits,
            env.engine.config.target_height,
            env.config.target_margin,
        )
    }
}

/// Replays fixed targets; the last entry repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoop(pub Vec<[f64; NA]>);

impl Controller for OpenLoop {
    fn targets(&self, _env: &PlanarEnv, t: f64, _state: &PlanarState) -> [f64; NA] {
        let k = (t / CONTROL_DT + 1e-9).floor() as usize;
        self.0[k.min(self.0.len() - 1)]
    }
}

#[derive(Debug, Clone)]
pub struct PlanarEnv {
    pub model: PlanarModel,
    pub engine: RewardEngine,
    pub config: PlanarEnvConfig,
    pub rest: PlanarState,
    pub target: MotionTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: [f64; NQ],
    pub v: [f64; NQ],
    pub targets: [f64; NA],
    pub contacts: [bool; NC],
    pub reward: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 25] = [
    "t",
    "x",
    "z",
    "pitch",
    "hind_hip",
    "hind_knee",
    "front_shoulder",
    "front_elbow",
    "x_dot",
    "z_dot",
    "pitch_dot",
    "hind_hip_dot",
    "hind_knee_dot",
    "front_shoulder_dot",
    "front_elbow_dot",
    "target_hind_hip",
    "target_hind_knee",
    "target_front_shoulder",
    "target_front_elbow",
    "hind_foot_contact",
    "front_foot_contact",
    "hind_knee_contact",
    "front_knee_contact",
    "base_contact",
    "reward",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub undiscounted: f64,
    pub discounted: f64,
    pub steps: u64,
    pub termination: TerminationReason,
    pub final_state: PlanarState,
    pub final_height: f64,
    pub final_pitch_error: f64,
    /// Empty unless recording was requested.
    pub trajectory: Vec<TrajectoryRow>,
    pub breakdowns: Vec<RewardBreakdown>,
    /// What the reward engine saw at each recorded step.
    pub states: Vec<EnvState>,
}

impl Rollout {
    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_COLUMNS)?;
        for r in &self.trajectory {
            let mut rec: Vec<String> = Vec::with_capacity(TRAJECTORY_COLUMNS.len());
            rec.push(r.t.to_string());
            rec.extend(r.q.iter().chain(&r.v).chain(&r.targets).map(f64::to_string));
            let flag = |b: bool| if b { "1" } else { "0" }.to_string();
            rec.extend(r.contacts[..4].iter().map(|c| flag(*c)));
            rec.push(flag(r.contacts[4..].iter().any(|c| *c)));
            rec.push(r.reward.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn joint_vector(hind: [f64; 2], front: [f64; 2]) -> JointVector {
    let mut q = JointVector::zeros();
    for leg in Leg::ALL {
        let pair = if leg.is_front() { front } else { hind };
        q.set(JointId::new(leg, JointKind::Thigh), pair[0]);
        q.set(JointId::new(leg, JointKind::Calf), pair[1]);
    }
    q
}

impl PlanarEnv {
    pub fn new(robot: RobotModel, mut reward: RewardConfig, config: PlanarEnvConfig) -> Result<Self, PlanarError> {
        let model = PlanarModel::new(&robot, config.params)?;
        let rest = model.rest_state()?;
        reward.max_steps = config.max_steps;
        let target = MotionTarget::hold(&robot);
        Ok(Self {
            model,
            engine: RewardEngine::new(robot, reward),
            config,
            rest,
            target,
        })
    }

    /// The planar state as the 3D reward engine sees it. Each effective joint
    /// drives both legs of its pair; hips stay at zero.
    pub fn env_state(&self, s: &PlanarState, action: &[f64; NA], prev_action: &[f64; NA]) -> EnvState {
        let phi = s.q[PITCH];
        let orientation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -phi);
        let pos = self.model.contact_positions(s);
        let vel = self.model.contact_velocities(s);
        let foot = |i: usize| (pos[i].y, Vector3::new(vel[i].x, 0.0, vel[i].y));
        let (hind_h, hind_v) = foot(ContactPoint::HindFoot as usize);
        let (front_h, front_v) = foot(ContactPoint::FrontFoot as usize);
        let mut foot_heights = [0.0; NUM_LEGS];
        let mut foot_velocities = [Vector3::zeros(); NUM_LEGS];
        let mut foot_contacts = [false; NUM_LEGS];
        for leg in Leg::ALL {
            let i = leg.index();
            let front = leg.is_front();
            foot_heights[i] = if front { front_h } else { hind_h };
            foot_velocities[i] = if front { front_v } else { hind_v };
            foot_contacts[i] = s.contacts[if front { ContactPoint::FrontFoot } else { ContactPoint::HindFoot } as usize];
        }
        let base_hit = s.contacts[ContactPoint::BaseRearBelly as usize..].iter().any(|c| *c);
        let mut torques = [0.0; 12];
        for leg in Leg::ALL {
            let (a, b) = if leg.is_front() { (2, 3) } else { (0, 1) };
            torques[JointId::new(leg, JointKind::Thigh).index()] = 0.5 * s.torques[a];
            torques[JointId::new(leg, JointKind::Calf).index()] = 0.5 * s.torques[b];
        }
        EnvState {
            base: BasePose {
                position: Vector3::new(s.q[X], 0.0, s.q[Z]),
                orientation,
            },
            base_lin_vel: Vector3::new(s.v[X], 0.0, s.v[Z]),
            base_ang_vel: Vector3::new(0.0, -s.v[PITCH], 0.0),
            heading: 0.0,
            q: joint_vector([s.q[HIND_HIP], s.q[HIND_KNEE]], [s.q[FRONT_SHOULDER], s.q[FRONT_ELBOW]]),
            qd: joint_vector([s.v[HIND_HIP], s.v[HIND_KNEE]], [s.v[FRONT_SHOULDER], s.v[FRONT_ELBOW]]),
            torques,
            foot_contacts,
            foot_heights,
            foot_velocities,
            non_foot_collision: base_hit || s.contacts[ContactPoint::FrontKnee as usize],
            rear_leg_collision: s.contacts[ContactPoint::HindKnee as usize],
            action: joint_vector([action[0], action[1]], [action[2], action[3]]),
            prev_action: joint_vector([prev_action[0], prev_action[1]], [prev_action[2], prev_action[3]]),
            step: s.step,
            target: self.target,
        }
    }

    /// Runs one episode from the settled rest pose until termination. A
    /// simulation blow-up ends the episode as a collision with a large
    /// penalty so optimizers steer away from it.
    pub fn rollout<C: Controller + ?Sized>(&self, controller: &C, record: bool) -> Rollout {
        let mut state = self.rest;
        let mut prev = self.model.nominal;
        let (mut ret, mut disc, mut gamma) = (0.0, 0.0, 1.0);
        let mut trajectory = Vec::new();
        let mut breakdowns = Vec::new();
        let mut states = Vec::new();
        let termination = loop {
            let t = state.step as f64 * CONTROL_DT;
            let action = controller.targets(self, t, &state);
            let next = match self.model.step(&state, &action) {
                Ok(s) => s,
                Err(_) => {
                    ret -= 100.0;
                    disc -= 100.0 * gamma;
                    break TerminationReason::Collision;
                }
            };
            let es = self.env_state(&next, &action, &prev);
            let b = self.engine.total_reward(&es);
            ret += b.total;
            disc += gamma * b.total;
            gamma *= self.config.discount;
            if record {
                trajectory.push(TrajectoryRow {
                    t: next.step as f64 * CONTROL_DT,
                    q: next.q,
                    v: next.v,
                    targets: action,
                    contacts: next.contacts,
                    reward: b.total,
                });
                breakdowns.push(b);
            }
            state = next;
            prev = action;
            let verdict = self.engine.check_termination(&es);
            if record {
                states.push(es);
            }
            if verdict.done {
                break verdict.reason;
            }
        };
        Rollout {
            undiscounted: ret,
            discounted: disc,
            steps: state.step,
            termination,
            final_state: state,
            final_height: state.q[Z],
            final_pitch_error: (FRAC_PI_2 - state.q[PITCH].sin().clamp(-1.0, 1.0).asin()).max(0.0),
            trajectory,
            breakdowns,
            states,
        }
    }
}
