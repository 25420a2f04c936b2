//! Reward terms, the dynamic tracking scale, the sit-down preset and episode
//! termination.
//!
//! `total = stand + track + reg`, where
//!
//! * `stand = height + pitch + collision`
//! * `track_x = alpha_x * c * exp(-e_x / sigma_x)` for base velocity, heading
//!   and front-toe position, with one shared standing scale `c`
//! * `reg` collects joint velocity, limit proximity, torque, action rate,
//!   rear-foot gait and contact slip penalties, each `<= 0`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use thiserror::Error;

use crate::kv::{KvDocument, KvError, KvWriter};
use crate::observation::CONTROL_DT;
use crate::robot_model::{BasePose, JointId, JointVector, Leg, RobotModel, NUM_JOINTS, NUM_LEGS};
use crate::target_gen::{wrap_angle, MotionTarget};

pub const REWARD_FORMAT: &str = "quadbiped-reward/1";

/// Instantaneous state seen by the reward and termination checks.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub base: BasePose,
    /// World frame.
    pub base_lin_vel: Vector3<f64>,
    /// World frame.
    pub base_ang_vel: Vector3<f64>,
    /// Yaw of the base heading (rad).
    pub heading: f64,
    pub q: JointVector,
    pub qd: JointVector,
    pub torques: [f64; NUM_JOINTS],
    /// FL, FR, RL, RR.
    pub foot_contacts: [bool; NUM_LEGS],
    /// Toe heights above ground (m), FL, FR, RL, RR.
    pub foot_heights: [f64; NUM_LEGS],
    /// Toe velocities, world frame.
    pub foot_velocities: [Vector3<f64>; NUM_LEGS],
    /// Base or front limbs (anything but a toe) touching the ground.
    pub non_foot_collision: bool,
    /// Rear thighs or calves touching the ground. Penalized, never terminates.
    pub rear_leg_collision: bool,
    pub action: JointVector,
    pub prev_action: JointVector,
    pub step: u64,
    pub target: MotionTarget,
}

impl EnvState {
    /// Sitting quadrupedal rest: base level at `height`, nominal joints.
    pub fn resting(model: &RobotModel, height: f64) -> Self {
        Self {
            base: BasePose {
                position: Vector3::new(0.0, 0.0, height),
                ..BasePose::identity()
            },
            base_lin_vel: Vector3::zeros(),
            base_ang_vel: Vector3::zeros(),
            heading: 0.0,
            q: model.nominal_pose,
            qd: JointVector::zeros(),
            torques: [0.0; NUM_JOINTS],
            foot_contacts: [true; NUM_LEGS],
            foot_heights: [0.0; NUM_LEGS],
            foot_velocities: [Vector3::zeros(); NUM_LEGS],
            non_foot_collision: false,
            rear_leg_collision: false,
            action: model.nominal_pose,
            prev_action: model.nominal_pose,
            step: 0,
            target: MotionTarget::hold(model),
        }
    }

    /// Elevation of the base x axis above the horizontal, in `[-pi/2, pi/2]`.
    pub fn body_elevation(&self) -> f64 {
        let x = self.base.orientation * Vector3::x();
        x.z.clamp(-1.0, 1.0).asin()
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * CONTROL_DT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    Dynamic,
    /// Ablation: `c = 1` everywhere.
    ConstantOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shaping {
    Quadratic,
    Hinge,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }
    };
}

keyword_enum!(ScaleMode { Dynamic => "dynamic", ConstantOne => "constant_one" });
keyword_enum!(Shaping { Quadratic => "quadratic", Hinge => "hinge" });

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackTerm {
    pub alpha: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub base_v: TrackTerm,
    pub heading: TrackTerm,
    pub hand: TrackTerm,

    pub height_weight: f64,
    pub pitch_weight: f64,
    pub collision_weight: f64,
    /// Standing base height `H_up` (m).
    pub target_height: f64,
    /// Body elevation error (rad) tolerated as upright.
    pub pitch_band: f64,
    /// Width (rad) of the cosine fall-off outside the band.
    pub pitch_decay: f64,

    pub scale_mode: ScaleMode,
    pub scale_height_gain: f64,
    /// Height fraction of `H_up` at the sigmoid midpoint.
    pub scale_height_mid: f64,
    pub scale_pitch_gain: f64,
    /// Elevation error (rad) at the sigmoid midpoint.
    pub scale_pitch_mid: f64,

    pub joint_velocity_weight: f64,
    pub joint_velocity_shaping: Shaping,
    /// Hinge knee for joint velocity (rad/s).
    pub joint_velocity_soft: f64,
    pub joint_limit_weight: f64,
    /// Fraction of each joint range that is penalty-free, centred.
    pub joint_limit_soft_fraction: f64,
    pub torque_weight: f64,
    pub torque_shaping: Shaping,
    /// Hinge knee as a fraction of the torque limit.
    pub torque_soft_fraction: f64,
    pub action_rate_weight: f64,
    pub gait_weight: f64,
    pub gait_period: f64,
    pub swing_height: f64,
    pub slip_weight: f64,

    pub sitdown_belly_weight: f64,
    pub sitdown_pose_weight: f64,
    pub sitdown_pose_sigma: f64,

    pub collision_grace_steps: u64,
    pub max_steps: u64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            base_v: TrackTerm { alpha: 0.25, sigma: 0.25 },
            heading: TrackTerm { alpha: 0.2, sigma: 0.3 },
            hand: TrackTerm { alpha: 0.7, sigma: 0.04 },
            height_weight: 1.0,
            pitch_weight: 1.0,
            collision_weight: 1.0,
            target_height: 0.42,
            pitch_band: 0.3,
            pitch_decay: 1.2,
            scale_mode: ScaleMode::Dynamic,
            scale_height_gain: 10.0,
            scale_height_mid: 0.7,
            scale_pitch_gain: 6.0,
            scale_pitch_mid: 0.6,
            joint_velocity_weight: 5e-4,
            joint_velocity_shaping: Shaping::Quadratic,
            joint_velocity_soft: 10.0,
            joint_limit_weight: 1.0,
            joint_limit_soft_fraction: 0.9,
            torque_weight: 2e-4,
            torque_shaping: Shaping::Quadratic,
            torque_soft_fraction: 0.8,
            action_rate_weight: 0.01,
            gait_weight: 5.0,
            gait_period: 0.5,
            swing_height: 0.05,
            slip_weight: 0.1,
            sitdown_belly_weight: 1.0,
            sitdown_pose_weight: 1.0,
            sitdown_pose_sigma: 0.5,
            collision_grace_steps: 30,
            max_steps: 1000,
        }
    }
}

#[derive(Debug, Error)]
pub enum RewardConfigError {
    #[error(transparent)]
    Kv(#[from] KvError),
}

impl RewardConfig {
    /// Parses the plain-text config. Missing keys keep their defaults;
    /// unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self, RewardConfigError> {
        let doc = KvDocument::parse(text)?;
        let mut r = doc.reader();
        let d = Self::default();
        let format = r.str("format")?;
        if format != REWARD_FORMAT {
            return Err(r.invalid("format", format!("unsupported format `{format}`, expected `{REWARD_FORMAT}`")).into());
        }

        let term = |name: &str, def: TrackTerm, r: &mut crate::kv::KvReader<'_>| -> Result<TrackTerm, KvError> {
            let alpha = r.f64_or(&format!("track.{name}.alpha"), def.alpha)?;
            let skey = format!("track.{name}.sigma");
            let sigma = r.f64_or(&skey, def.sigma)?;
            if !(sigma > 0.0) {
                return Err(r.invalid(&skey, format!("`{skey}` must be positive")));
            }
            if !alpha.is_finite() {
                return Err(r.invalid(&format!("track.{name}.alpha"), "alpha must be finite"));
            }
            Ok(TrackTerm { alpha, sigma })
        };
        let base_v = term("base_v", d.base_v, &mut r)?;
        let heading = term("heading", d.heading, &mut r)?;
        let hand = term("hand", d.hand, &mut r)?;

        fn keyword<T: FromStr<Err = String>>(r: &mut crate::kv::KvReader<'_>, key: &str, def: T) -> Result<T, KvError> {
            match r.opt_str(key) {
                None => Ok(def),
                Some(s) => s.parse().map_err(|e: String| r.invalid(key, format!("`{key}`: {e}"))),
            }
        }

        let cfg = Self {
            base_v,
            heading,
            hand,
            height_weight: r.f64_or("stand.height.weight", d.height_weight)?,
            pitch_weight: r.f64_or("stand.pitch.weight", d.pitch_weight)?,
            collision_weight: r.f64_or("stand.collision.weight", d.collision_weight)?,
            target_height: r.f64_or("stand.target_height", d.target_height)?,
            pitch_band: r.f64_or("stand.pitch_band", d.pitch_band)?,
            pitch_decay: r.f64_or("stand.pitch_decay", d.pitch_decay)?,
            scale_mode: keyword(&mut r, "scale.mode", d.scale_mode)?,
            scale_height_gain: r.f64_or("scale.height_gain", d.scale_height_gain)?,
            scale_height_mid: r.f64_or("scale.height_mid", d.scale_height_mid)?,
            scale_pitch_gain: r.f64_or("scale.pitch_gain", d.scale_pitch_gain)?,
            scale_pitch_mid: r.f64_or("scale.pitch_mid", d.scale_pitch_mid)?,
            joint_velocity_weight: r.f64_or("reg.joint_velocity.weight", d.joint_velocity_weight)?,
            joint_velocity_shaping: keyword(&mut r, "reg.joint_velocity.shaping", d.joint_velocity_shaping)?,
            joint_velocity_soft: r.f64_or("reg.joint_velocity.soft", d.joint_velocity_soft)?,
            joint_limit_weight: r.f64_or("reg.joint_limit.weight", d.joint_limit_weight)?,
            joint_limit_soft_fraction: r.f64_or("reg.joint_limit.soft_fraction", d.joint_limit_soft_fraction)?,
            torque_weight: r.f64_or("reg.torque.weight", d.torque_weight)?,
            torque_shaping: keyword(&mut r, "reg.torque.shaping", d.torque_shaping)?,
            torque_soft_fraction: r.f64_or("reg.torque.soft_fraction", d.torque_soft_fraction)?,
            action_rate_weight: r.f64_or("reg.action_rate.weight", d.action_rate_weight)?,
            gait_weight: r.f64_or("reg.gait.weight", d.gait_weight)?,
            gait_period: r.f64_or("reg.gait.period", d.gait_period)?,
            swing_height: r.f64_or("reg.gait.swing_height", d.swing_height)?,
            slip_weight: r.f64_or("reg.slip.weight", d.slip_weight)?,
            sitdown_belly_weight: r.f64_or("sitdown.belly.weight", d.sitdown_belly_weight)?,
            sitdown_pose_weight: r.f64_or("sitdown.pose.weight", d.sitdown_pose_weight)?,
            sitdown_pose_sigma: r.f64_or("sitdown.pose.sigma", d.sitdown_pose_sigma)?,
            collision_grace_steps: r.u64_or("termination.collision_grace_steps", d.collision_grace_steps)?,
            max_steps: r.u64_or("termination.max_steps", d.max_steps)?,
        };
        let checks: [(&str, bool); 6] = [
            ("stand.target_height", cfg.target_height > 0.0),
            ("stand.pitch_band", cfg.pitch_band >= 0.0),
            ("stand.pitch_decay", cfg.pitch_decay > 0.0),
            ("reg.gait.period", cfg.gait_period > 0.0),
            ("sitdown.pose.sigma", cfg.sitdown_pose_sigma > 0.0),
            ("reg.joint_limit.soft_fraction", (0.0..=1.0).contains(&cfg.joint_limit_soft_fraction)),
        ];
        for (key, ok) in checks {
            if !ok {
                return Err(r.invalid(key, format!("`{key}` is out of range")).into());
            }
        }
        r.finish()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new();
        w.comment("Reward configuration.").str("format", REWARD_FORMAT).blank();
        for (name, t) in [("base_v", self.base_v), ("heading", self.heading), ("hand", self.hand)] {
            w.f64(&format!("track.{name}.alpha"), t.alpha);
            w.f64(&format!("track.{name}.sigma"), t.sigma);
        }
        w.blank()
            .f64("stand.height.weight", self.height_weight)
            .f64("stand.pitch.weight", self.pitch_weight)
            .f64("stand.collision.weight", self.collision_weight)
            .f64("stand.target_height", self.target_height)
            .f64("stand.pitch_band", self.pitch_band)
            .f64("stand.pitch_decay", self.pitch_decay)
            .blank()
            .str("scale.mode", &self.scale_mode.to_string())
            .f64("scale.height_gain", self.scale_height_gain)
            .f64("scale.height_mid", self.scale_height_mid)
            .f64("scale.pitch_gain", self.scale_pitch_gain)
            .f64("scale.pitch_mid", self.scale_pitch_mid)
            .blank()
            .f64("reg.joint_velocity.weight", self.joint_velocity_weight)
            .str("reg.joint_velocity.shaping", &self.joint_velocity_shaping.to_string())
            .f64("reg.joint_velocity.soft", self.joint_velocity_soft)
            .f64("reg.joint_limit.weight", self.joint_limit_weight)
            .f64("reg.joint_limit.soft_fraction", self.joint_limit_soft_fraction)
            .f64("reg.torque.weight", self.torque_weight)
            .str("reg.torque.shaping", &self.torque_shaping.to_string())
            .f64("reg.torque.soft_fraction", self.torque_soft_fraction)
            .f64("reg.action_rate.weight", self.action_rate_weight)
            .f64("reg.gait.weight", self.gait_weight)
            .f64("reg.gait.period", self.gait_period)
            .f64("reg.gait.swing_height", self.swing_height)
            .f64("reg.slip.weight", self.slip_weight)
            .blank()
            .f64("sitdown.belly.weight", self.sitdown_belly_weight)
            .f64("sitdown.pose.weight", self.sitdown_pose_weight)
            .f64("sitdown.pose.sigma", self.sitdown_pose_sigma)
            .blank();
        w.str("termination.collision_grace_steps", &self.collision_grace_steps.to_string());
        w.str("termination.max_steps", &self.max_steps.to_string());
        w.finish()
    }

    /// Same config with every tracking alpha multiplied by `k`.
    pub fn with_alpha_scaled(&self, k: f64) -> Self {
        let mut c = self.clone();
        c.base_v.alpha *= k;
        c.heading.alpha *= k;
        c.hand.alpha *= k;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandTerms {
    pub height: f64,
    pub pitch: f64,
    pub collision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingTerms {
    pub base_v: f64,
    pub heading: f64,
    pub hand: f64,
    pub c_base_v: f64,
    pub c_heading: f64,
    pub c_hand: f64,
    pub e_base_v: f64,
    pub e_heading: f64,
    pub e_hand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegTerms {
    pub joint_velocity: f64,
    pub joint_limit: f64,
    pub torque: f64,
    pub action_rate: f64,
    pub gait: f64,
    pub slip: f64,
}

impl RegTerms {
    pub fn sum(&self) -> f64 {
        self.joint_velocity + self.joint_limit + self.torque + self.action_rate + self.gait + self.slip
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub stand: StandTerms,
    pub track: TrackingTerms,
    pub reg: RegTerms,
    pub total: f64,
}

pub const BREAKDOWN_COLUMNS: [&str; 22] = [
    "height",
    "pitch",
    "collision",
    "track_base_v",
    "track_heading",
    "track_hand",
    "reg_joint_velocity",
    "reg_joint_limit",
    "reg_torque",
    "reg_action_rate",
    "reg_gait",
    "reg_slip",
    "c_base_v",
    "c_heading",
    "c_hand",
    "e_base_v",
    "e_heading",
    "e_hand",
    "stand_total",
    "track_total",
    "reg_total",
    "total",
];

impl RewardBreakdown {
    /// The summed terms, in the order they enter `total`.
    pub fn parts(&self) -> [f64; 12] {
        [
            self.stand.height,
            self.stand.pitch,
            self.stand.collision,
            self.track.base_v,
            self.track.heading,
            self.track.hand,
            self.reg.joint_velocity,
            self.reg.joint_limit,
            self.reg.torque,
            self.reg.action_rate,
            self.reg.gait,
            self.reg.slip,
        ]
    }

    pub fn track_total(&self) -> f64 {
        self.track.base_v + self.track.heading + self.track.hand
    }

    pub fn row(&self) -> [f64; 22] {
        let p = self.parts();
        let t = &self.track;
        [
            p[0],
            p[1],
            p[2],
            p[3],
            p[4],
            p[5],
            p[6],
            p[7],
            p[8],
            p[9],
            p[10],
            p[11],
            t.c_base_v,
            t.c_heading,
            t.c_hand,
            t.e_base_v,
            t.e_heading,
            t.e_hand,
            p[0] + p[1] + p[2],
            self.track_total(),
            self.reg.sum(),
            self.total,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    None,
    Collision,
    JointLimit,
    Timeout,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::None => "none",
            TerminationReason::Collision => "collision",
            TerminationReason::JointLimit => "joint_limit",
            TerminationReason::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TerminationVerdict {
    pub done: bool,
    pub reason: TerminationReason,
}

impl TerminationVerdict {
    fn of(reason: TerminationReason) -> Self {
        Self {
            done: reason != TerminationReason::None,
            reason,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Reward functions bound to a robot model (needed for front-toe FK and
/// joint limits).
#[derive(Debug, Clone)]
pub struct RewardEngine {
    pub model: RobotModel,
    pub config: RewardConfig,
}

impl RewardEngine {
    pub fn new(model: RobotModel, config: RewardConfig) -> Self {
        Self { model, config }
    }

    /// Elevation shortfall from vertical, `>= 0`.
    pub fn pitch_error(&self, state: &EnvState) -> f64 {
        (FRAC_PI_2 - state.body_elevation()).max(0.0)
    }

    /// Upright set: height at or above `H_up` and pitch inside the band.
    pub fn is_upright(&self, state: &EnvState) -> bool {
        state.base.position.z >= self.config.target_height && self.pitch_error(state) <= self.config.pitch_band
    }

    fn illegal_contact(state: &EnvState) -> bool {
        state.non_foot_collision || state.foot_contacts[Leg::FL.index()] || state.foot_contacts[Leg::FR.index()]
    }

    pub fn stand_reward(&self, state: &EnvState) -> StandTerms {
        let cfg = &self.config;
        let h = (state.base.position.z / cfg.target_height).clamp(0.0, 1.0);
        let err = self.pitch_error(state);
        let window = if err <= cfg.pitch_band {
            1.0
        } else {
            let u = ((err - cfg.pitch_band) / cfg.pitch_decay).min(1.0);
            0.5 * (1.0 + (PI * u).cos())
        };
        StandTerms {
            height: cfg.height_weight * h,
            pitch: cfg.pitch_weight * window,
            collision: if Self::illegal_contact(state) || state.rear_leg_collision {
                -cfg.collision_weight
            } else {
                0.0
            },
        }
    }

    /// Shared standing scale in `[0, 1]`; exactly 1 on the upright set.
    pub fn dynamic_scale(&self, state: &EnvState) -> f64 {
        let cfg = &self.config;
        if cfg.scale_mode == ScaleMode::ConstantOne {
            return 1.0;
        }
        let z = state.base.position.z / cfg.target_height;
        let fh = if z >= 1.0 {
            1.0
        } else {
            let top = sigmoid(cfg.scale_height_gain * (1.0 - cfg.scale_height_mid));
            (sigmoid(cfg.scale_height_gain * (z - cfg.scale_height_mid)) / top).min(1.0)
        };
        let err = self.pitch_error(state);
        let fp = if err <= cfg.pitch_band {
            1.0
        } else {
            let top = sigmoid(cfg.scale_pitch_gain * (cfg.scale_pitch_mid - cfg.pitch_band));
            (sigmoid(cfg.scale_pitch_gain * (cfg.scale_pitch_mid - err)) / top).min(1.0)
        };
        (fh * fp).clamp(0.0, 1.0)
    }

    /// `(e_base_v, e_heading, e_hand)`.
    pub fn tracking_errors(&self, state: &EnvState) -> (f64, f64, f64) {
        let target = &state.target;
        let (s, c) = state.heading.sin_cos();
        let v = state.base_lin_vel;
        let vx = c * v.x + s * v.y;
        let vy = -s * v.x + c * v.y;
        let e_v = (vx - target.v_x).powi(2) + (vy - target.v_y).powi(2);
        let e_h = wrap_angle(target.heading_des - state.heading).powi(2);
        let mut e_hand = 0.0;
        for (k, leg) in Leg::FRONT.into_iter().enumerate() {
            let toe = self.model.toe(leg, state.q.leg(leg));
            e_hand += (toe - target.toe_des[k]).norm_squared();
        }
        (e_v, e_h, e_hand)
    }

    pub fn tracking_reward(&self, state: &EnvState) -> TrackingTerms {
        let c = self.dynamic_scale(state);
        let (e_v, e_h, e_hand) = self.tracking_errors(state);
        let cfg = &self.config;
        let term = |t: TrackTerm, e: f64| t.alpha * c * (-e / t.sigma).exp();
        TrackingTerms {
            base_v: term(cfg.base_v, e_v),
            heading: term(cfg.heading, e_h),
            hand: term(cfg.hand, e_hand),
            c_base_v: c,
            c_heading: c,
            c_hand: c,
            e_base_v: e_v,
            e_heading: e_h,
            e_hand,
        }
    }

    /// Reference swing height of a rear foot at time `t`. RL and RR are half
    /// a period apart.
    pub fn gait_reference(&self, leg: Leg, t: f64) -> f64 {
        let offset = if leg == Leg::RR { 0.5 } else { 0.0 };
        let phase = (t / self.config.gait_period + offset).rem_euclid(1.0);
        self.config.swing_height * (PI * phase).sin().powi(2)
    }

    pub fn regularization_reward(&self, state: &EnvState) -> RegTerms {
        let cfg = &self.config;
        let shaped = |x: f64, knee: f64, shaping: Shaping| match shaping {
            Shaping::Quadratic => x * x,
            Shaping::Hinge => (x.abs() - knee).max(0.0).powi(2),
        };

        let joint_velocity = -cfg.joint_velocity_weight
            * state
                .qd
                .iter()
                .map(|v| shaped(*v, cfg.joint_velocity_soft, cfg.joint_velocity_shaping))
                .sum::<f64>();

        let mut limit = 0.0;
        let torque_limits = self.model.torque_limits();
        let mut torque = 0.0;
        for (i, &max_torque) in torque_limits.iter().enumerate() {
            let lim = self.model.joint_limit(JointId::from_index(i));
            let half = 0.5 * lim.width() * cfg.joint_limit_soft_fraction;
            let (lo, hi) = (lim.center() - half, lim.center() + half);
            let q = state.q.0[i];
            limit += (lo - q).max(0.0) + (q - hi).max(0.0);
            torque += shaped(state.torques[i], cfg.torque_soft_fraction * max_torque, cfg.torque_shaping);
        }

        let action_rate = -cfg.action_rate_weight * state.action.sub(&state.prev_action).norm_squared();

        let t = state.time();
        let gait = -cfg.gait_weight
            * Leg::REAR
                .iter()
                .map(|leg| (state.foot_heights[leg.index()] - self.gait_reference(*leg, t)).powi(2))
                .sum::<f64>();

        let slip = -cfg.slip_weight
            * (0..NUM_LEGS)
                .filter(|i| state.foot_contacts[*i])
                .map(|i| {
                    let v = state.foot_velocities[i];
                    v.x * v.x + v.y * v.y
                })
                .sum::<f64>();

        RegTerms {
            joint_velocity,
            joint_limit: -cfg.joint_limit_weight * limit,
            torque: -cfg.torque_weight * torque,
            action_rate,
            gait,
            slip,
        }
    }

    pub fn total_reward(&self, state: &EnvState) -> RewardBreakdown {
        let stand = self.stand_reward(state);
        let track = self.tracking_reward(state);
        let reg = self.regularization_reward(state);
        let mut b = RewardBreakdown {
            stand,
            track,
            reg,
            total: 0.0,
        };
        b.total = b.parts().iter().sum();
        b
    }

    /// Belly-down alignment plus closeness to the nominal quadrupedal pose.
    pub fn sitdown_reward(&self, state: &EnvState) -> f64 {
        let cfg = &self.config;
        let z_body = state.base.orientation * Vector3::z();
        let belly = 0.5 * (1.0 + z_body.z);
        let pose = (-state.q.sub(&self.model.nominal_pose).norm_squared() / cfg.sitdown_pose_sigma).exp();
        cfg.sitdown_belly_weight * belly + cfg.sitdown_pose_weight * pose
    }

    /// Collision beats joint limit beats timeout.
    pub fn check_termination(&self, state: &EnvState) -> TerminationVerdict {
        let cfg = &self.config;
        if state.step > cfg.collision_grace_steps && Self::illegal_contact(state) {
            return TerminationVerdict::of(TerminationReason::Collision);
        }
        if !self.model.within_limits(&state.q, 0.0) {
            return TerminationVerdict::of(TerminationReason::JointLimit);
        }
        if state.step >= cfg.max_steps {
            return TerminationVerdict::of(TerminationReason::Timeout);
        }
        TerminationVerdict::of(TerminationReason::None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn engine() -> RewardEngine {
        RewardEngine::new(RobotModel::standin(), RewardConfig::default())
    }

    fn upright(e: &RewardEngine) -> EnvState {
        let mut s = EnvState::resting(&e.model, e.config.target_height);
        s.base.orientation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -FRAC_PI_2);
        s.foot_contacts = [false, false, true, true];
        s
    }

    #[test]
    fn upright_maxima() {
        let e = engine();
        let s = upright(&e);
        let st = e.stand_reward(&s);
        assert_eq!(st.height, e.config.height_weight);
        assert_eq!(st.pitch, e.config.pitch_weight);
        assert_eq!(st.collision, 0.0);
        assert_eq!(e.dynamic_scale(&s), 1.0);
    }

    #[test]
    fn lying_is_suppressed() {
        let e = engine();
        let s = EnvState::resting(&e.model, 0.1 * e.config.target_height);
        let st = e.stand_reward(&s);
        assert!(st.height <= 0.2 * e.config.height_weight);
        assert!(e.dynamic_scale(&s) <= 0.05);
        let tr = e.tracking_reward(&s);
        assert!(tr.hand <= 0.05 * e.config.hand.alpha);
    }

    #[test]
    fn front_contact_penalized() {
        let e = engine();
        let mut s = upright(&e);
        s.foot_contacts[0] = true;
        assert_eq!(e.stand_reward(&s).collision, -e.config.collision_weight);
    }

    #[test]
    fn slip_formula() {
        let e = engine();
        let mut s = upright(&e);
        s.foot_velocities[2] = Vector3::new(0.2, 0.0, 0.0);
        let reg = e.regularization_reward(&s);
        assert!((reg.slip + e.config.slip_weight * 0.04).abs() < 1e-15);
    }

    #[test]
    fn config_round_trip() {
        let c = RewardConfig {
            scale_mode: ScaleMode::ConstantOne,
            torque_shaping: Shaping::Hinge,
            max_steps: 500,
            ..RewardConfig::default()
        };
        let back = RewardConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_rejects_bad_input() {
        let err = RewardConfig::from_text("format = quadbiped-reward/1\ntrack.hand.sigma = 0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = RewardConfig::from_text("format = quadbiped-reward/1\nscale.mode = fancy\n").unwrap_err();
        assert!(err.to_string().contains("constant_one"), "{err}");
        assert!(RewardConfig::from_text("format = quadbiped-reward/1\nbogus = 1\n").is_err());
    }
}
