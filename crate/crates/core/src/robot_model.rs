//! Kinematic description of the quadruped: geometry, limits and masses loaded
//! from a robot-description file, forward kinematics of each leg, joint-limit
//! checks and reachable toe-goal sampling.
//!
//! Leg chain (base frame x forward, y left, z up):
//!
//! ```text
//! toe = hip_offset + Rx(hip) * ( (0, ±l_hip, 0) + Ry(thigh) * ( (0, 0, -l_thigh) + Ry(calf) * (0, 0, -l_calf) ) )
//! ```
//!
//! `+l_hip` for left legs, `-l_hip` for right legs. Zero angles put the leg
//! straight down.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{KvDocument, KvError};

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;
pub const DESCRIPTION_FORMAT: &str = "quadbiped-robot/1";

const STANDIN_DESCRIPTION: &str = include_str!("../assets/robot/standin.robot");

#[derive(Debug, Error)]
pub enum RobotError {
    #[error("robot description: {0}")]
    Parse(#[from] KvError),
    #[error("non-finite joint angle for {leg}: {angles:?}")]
    NonFinite { leg: Leg, angles: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leg {
    FL,
    FR,
    RL,
    RR,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FL, Leg::FR, Leg::RL, Leg::RR];
    pub const FRONT: [Leg; 2] = [Leg::FL, Leg::FR];
    pub const REAR: [Leg; 2] = [Leg::RL, Leg::RR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_left(self) -> bool {
        matches!(self, Leg::FL | Leg::RL)
    }

    pub fn is_front(self) -> bool {
        matches!(self, Leg::FL | Leg::FR)
    }

    fn key(self) -> &'static str {
        match self {
            Leg::FL => "fl",
            Leg::FR => "fr",
            Leg::RL => "rl",
            Leg::RR => "rr",
        }
    }
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Leg::FL => "FL",
            Leg::FR => "FR",
            Leg::RL => "RL",
            Leg::RR => "RR",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JointKind {
    Hip,
    Thigh,
    Calf,
}

impl JointKind {
    pub const ALL: [JointKind; 3] = [JointKind::Hip, JointKind::Thigh, JointKind::Calf];

    fn key(self) -> &'static str {
        match self {
            JointKind::Hip => "hip",
            JointKind::Thigh => "thigh",
            JointKind::Calf => "calf",
        }
    }
}

/// A joint slot in the fixed leg-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointId {
    pub leg: Leg,
    pub kind: JointKind,
}

impl JointId {
    pub const fn new(leg: Leg, kind: JointKind) -> Self {
        Self { leg, kind }
    }

    pub fn index(self) -> usize {
        self.leg.index() * 3 + self.kind as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            leg: Leg::ALL[i / 3],
            kind: JointKind::ALL[i % 3],
        }
    }
}

/// `FL_hip_joint` style names.
impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_joint", self.leg, self.kind.key())
    }
}

impl FromStr for JointId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        (0..NUM_JOINTS)
            .map(JointId::from_index)
            .find(|j| j.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown joint `{s}`"))
    }
}

/// Twelve joint values in leg-major order FL, FR, RL, RR x (hip, thigh, calf).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointVector(pub [f64; NUM_JOINTS]);

impl JointVector {
    pub fn zeros() -> Self {
        Self([0.0; NUM_JOINTS])
    }

    pub fn leg(&self, leg: Leg) -> [f64; 3] {
        let i = leg.index() * 3;
        [self.0[i], self.0[i + 1], self.0[i + 2]]
    }

    pub fn set_leg(&mut self, leg: Leg, angles: [f64; 3]) {
        let i = leg.index() * 3;
        self.0[i..i + 3].copy_from_slice(&angles);
    }

    pub fn get(&self, joint: JointId) -> f64 {
        self.0[joint.index()]
    }

    pub fn set(&mut self, joint: JointId, value: f64) {
        self.0[joint.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn sub(&self, other: &JointVector) -> JointVector {
        let mut out = [0.0; NUM_JOINTS];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a - b;
        }
        JointVector(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

impl JointLimit {
    pub fn center(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMasses {
    pub base: f64,
    pub hip: f64,
    pub thigh: f64,
    pub calf: f64,
    pub foot: f64,
}

impl SegmentMasses {
    pub fn leg_total(&self) -> f64 {
        self.hip + self.thigh + self.calf + self.foot
    }

    pub fn total(&self) -> f64 {
        self.base + NUM_LEGS as f64 * self.leg_total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegGeometry {
    /// Hip joint position in the base frame.
    pub hip_offset: Vector3<f64>,
    /// Lateral hip link length (positive; side sign comes from the leg).
    pub hip_length: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    pub limits: [JointLimit; 3],
    pub torque_limits: [f64; 3],
}

impl LegGeometry {
    pub fn chain_length(&self) -> f64 {
        self.hip_length + self.thigh_length + self.calf_length
    }
}

/// Joint origins and axes of one leg at a configuration, base frame.
#[derive(Debug, Clone, Copy)]
pub struct LegFrames {
    pub origins: [Vector3<f64>; 3],
    pub axes: [Vector3<f64>; 3],
    /// Thigh-link end (calf joint), calf-link end (toe).
    pub knee: Vector3<f64>,
    pub toe: Vector3<f64>,
}

/// A toe position together with an in-limit joint triple that reaches it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachableToe {
    pub position: [f64; 3],
    pub angles: [f64; 3],
}

impl ReachableToe {
    pub fn vector(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePose {
    pub position: Vector3<f64>,
    /// Orientation of the base in the world: maps base-frame vectors to world.
    pub orientation: UnitQuaternion<f64>,
}

impl BasePose {
    /// Rejects quaternions whose norm is further than 1e-9 from one.
    pub fn new(position: Vector3<f64>, orientation: Quaternion<f64>) -> Option<Self> {
        if (orientation.norm() - 1.0).abs() > 1e-9 {
            return None;
        }
        Some(Self {
            position,
            orientation: UnitQuaternion::new_unchecked(orientation),
        })
    }

    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub legs: [LegGeometry; NUM_LEGS],
    pub masses: SegmentMasses,
    pub nominal_pose: JointVector,
}

impl RobotModel {
    /// The bundled stand-in description.
    pub fn standin() -> Self {
        Self::from_description(STANDIN_DESCRIPTION).expect("bundled robot description is valid")
    }

    pub fn standin_description() -> &'static str {
        STANDIN_DESCRIPTION
    }

    pub fn from_description(text: &str) -> Result<Self, RobotError> {
        let doc = KvDocument::parse(text)?;
        let mut r = doc.reader();
        let format = r.str("format")?;
        if format != DESCRIPTION_FORMAT {
            return Err(r
                .invalid("format", format!("unsupported format `{format}`, expected `{DESCRIPTION_FORMAT}`"))
                .into());
        }
        let name = r.str("name")?.to_string();
        let mass = |key: &str, r: &mut crate::kv::KvReader<'_>| -> Result<f64, KvError> {
            let m = r.f64(key)?;
            if m <= 0.0 {
                return Err(r.invalid(key, format!("`{key}` must be positive")));
            }
            Ok(m)
        };
        let masses = SegmentMasses {
            base: mass("mass.base", &mut r)?,
            hip: mass("mass.hip", &mut r)?,
            thigh: mass("mass.thigh", &mut r)?,
            calf: mass("mass.calf", &mut r)?,
            foot: mass("mass.foot", &mut r)?,
        };
        let mut nominal = JointVector::zeros();
        let mut legs = Vec::with_capacity(NUM_LEGS);
        for leg in Leg::ALL {
            let p = leg.key();
            let hip_offset = Vector3::from(r.numbers::<3>(&format!("{p}.hip_offset"))?);
            let mut lengths = [0.0; 3];
            let mut limits = [JointLimit { min: 0.0, max: 0.0 }; 3];
            for (i, kind) in JointKind::ALL.iter().enumerate() {
                let lkey = format!("{p}.{}.length", kind.key());
                let len = r.f64(&lkey)?;
                if len <= 0.0 {
                    return Err(r.invalid(&lkey, format!("`{lkey}` must be positive")).into());
                }
                lengths[i] = len;
                let mkey = format!("{p}.{}.limit", kind.key());
                let [min, max] = r.numbers::<2>(&mkey)?;
                if min >= max {
                    return Err(r.invalid(&mkey, format!("`{mkey}`: min must be below max")).into());
                }
                limits[i] = JointLimit { min, max };
            }
            let tkey = format!("{p}.torque");
            let torque_limits = r.numbers::<3>(&tkey)?;
            if torque_limits.iter().any(|t| *t <= 0.0) {
                return Err(r.invalid(&tkey, format!("`{tkey}` must be positive")).into());
            }
            let nkey = format!("{p}.nominal");
            let pose = r.numbers::<3>(&nkey)?;
            for (i, v) in pose.iter().enumerate() {
                if *v < limits[i].min || *v > limits[i].max {
                    return Err(r
                        .invalid(&nkey, format!("`{nkey}`: {} is outside its joint limit", JointKind::ALL[i].key()))
                        .into());
                }
            }
            nominal.set_leg(leg, pose);
            legs.push(LegGeometry {
                hip_offset,
                hip_length: lengths[0],
                thigh_length: lengths[1],
                calf_length: lengths[2],
                limits,
                torque_limits,
            });
        }
        r.finish()?;
        let legs: [LegGeometry; NUM_LEGS] = legs.try_into().expect("four legs");
        Ok(Self {
            name,
            legs,
            masses,
            nominal_pose: nominal,
        })
    }

    pub fn leg(&self, leg: Leg) -> &LegGeometry {
        &self.legs[leg.index()]
    }

    pub fn joint_limit(&self, joint: JointId) -> JointLimit {
        self.legs[joint.leg.index()].limits[joint.kind as usize]
    }

    pub fn torque_limits(&self) -> [f64; NUM_JOINTS] {
        let mut out = [0.0; NUM_JOINTS];
        for (i, o) in out.iter_mut().enumerate() {
            let j = JointId::from_index(i);
            *o = self.legs[j.leg.index()].torque_limits[j.kind as usize];
        }
        out
    }

    fn side(leg: Leg) -> f64 {
        if leg.is_left() {
            1.0
        } else {
            -1.0
        }
    }

    /// Toe position of `leg` in the base frame.
    pub fn forward_kinematics_toe(&self, leg: Leg, angles: [f64; 3]) -> Result<Vector3<f64>, RobotError> {
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(RobotError::NonFinite { leg, angles });
        }
        Ok(self.toe(leg, angles))
    }

    /// Rotation-matrix FK path without the finiteness check.
    pub fn toe(&self, leg: Leg, angles: [f64; 3]) -> Vector3<f64> {
        self.leg_frames(leg, angles).toe
    }

    /// Same chain composed with unit quaternions. Agrees with [`Self::toe`]
    /// to rounding.
    pub fn toe_via_quaternions(&self, leg: Leg, angles: [f64; 3]) -> Vector3<f64> {
        let g = self.leg(leg);
        let qx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), angles[0]);
        let qy1 = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angles[1]);
        let qy2 = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angles[2]);
        let calf = Vector3::new(0.0, 0.0, -g.calf_length);
        let thigh = Vector3::new(0.0, 0.0, -g.thigh_length);
        let hip = Vector3::new(0.0, Self::side(leg) * g.hip_length, 0.0);
        g.hip_offset + qx * (hip + qy1 * (thigh + qy2 * calf))
    }

    pub fn leg_frames(&self, leg: Leg, angles: [f64; 3]) -> LegFrames {
        let g = self.leg(leg);
        let rx: Matrix3<f64> = *Rotation3::from_axis_angle(&Vector3::x_axis(), angles[0]).matrix();
        let ry1: Matrix3<f64> = *Rotation3::from_axis_angle(&Vector3::y_axis(), angles[1]).matrix();
        let ry2: Matrix3<f64> = *Rotation3::from_axis_angle(&Vector3::y_axis(), angles[2]).matrix();
        let r_thigh = rx * ry1;
        let r_calf = r_thigh * ry2;
        let hip_origin = g.hip_offset;
        let thigh_origin = hip_origin + rx * Vector3::new(0.0, Self::side(leg) * g.hip_length, 0.0);
        let knee = thigh_origin + r_thigh * Vector3::new(0.0, 0.0, -g.thigh_length);
        let toe = knee + r_calf * Vector3::new(0.0, 0.0, -g.calf_length);
        let y_axis = rx * Vector3::y();
        LegFrames {
            origins: [hip_origin, thigh_origin, knee],
            axes: [Vector3::x(), y_axis, y_axis],
            knee,
            toe,
        }
    }

    /// d(toe)/d(angles), columns per joint.
    pub fn toe_jacobian(&self, leg: Leg, angles: [f64; 3]) -> Matrix3<f64> {
        let f = self.leg_frames(leg, angles);
        let mut jac = Matrix3::zeros();
        for i in 0..3 {
            jac.set_column(i, &f.axes[i].cross(&(f.toe - f.origins[i])));
        }
        jac
    }

    /// True iff every joint lies strictly inside `[min + margin, max - margin]`.
    pub fn within_limits(&self, q: &JointVector, margin: f64) -> bool {
        q.0.iter().enumerate().all(|(i, v)| {
            let lim = self.joint_limit(JointId::from_index(i));
            *v > lim.min + margin && *v < lim.max - margin
        })
    }

    pub fn leg_within_limits(&self, leg: Leg, angles: [f64; 3]) -> bool {
        let g = self.leg(leg);
        angles
            .iter()
            .zip(&g.limits)
            .all(|(a, lim)| *a >= lim.min && *a <= lim.max)
    }

    /// Radius of a sphere around the base origin containing every toe position
    /// of `leg`.
    pub fn workspace_radius(&self, leg: Leg) -> f64 {
        let g = self.leg(leg);
        g.chain_length() + g.hip_offset.norm()
    }

    /// FK image of a joint triple drawn uniformly inside the leg's limits.
    pub fn sample_reachable_toe_goal<R: Rng + ?Sized>(&self, leg: Leg, rng: &mut R) -> ReachableToe {
        let g = self.leg(leg);
        let angles = [
            rng.random_range(g.limits[0].min..=g.limits[0].max),
            rng.random_range(g.limits[1].min..=g.limits[1].max),
            rng.random_range(g.limits[2].min..=g.limits[2].max),
        ];
        let p = self.toe(leg, angles);
        ReachableToe {
            position: [p.x, p.y, p.z],
            angles,
        }
    }

    /// Closest point of the leg's reachable workspace to `target`, with its
    /// joint witness. Points already reachable (within [`REACH_TOLERANCE`])
    /// come back unchanged.
    pub fn nearest_reachable(&self, leg: Leg, target: Vector3<f64>) -> ReachableToe {
        if let Some(angles) = self.inverse_kinematics(leg, target).first() {
            return ReachableToe {
                position: [target.x, target.y, target.z],
                angles: *angles,
            };
        }
        let g = self.leg(leg);
        const GRID: usize = 8;
        let axis = |k: usize| -> Vec<f64> {
            let lim = g.limits[k];
            (0..GRID)
                .map(|i| lim.min + lim.width() * i as f64 / (GRID - 1) as f64)
                .collect()
        };
        let (a0, a1, a2) = (axis(0), axis(1), axis(2));
        let mut seeds: Vec<(f64, [f64; 3])> = Vec::with_capacity(GRID * GRID * GRID);
        for &x in &a0 {
            for &y in &a1 {
                for &z in &a2 {
                    let q = [x, y, z];
                    seeds.push(((self.toe(leg, q) - target).norm_squared(), q));
                }
            }
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = seeds[0];
        for &(_, q0) in seeds.iter().take(6) {
            let (d2, q) = self.refine_toward(leg, target, q0);
            if d2 < best.0 {
                best = (d2, q);
            }
            if best.0 < REACH_TOLERANCE * REACH_TOLERANCE * 1e-2 {
                break;
            }
        }
        let (d2, angles) = best;
        if d2.sqrt() <= REACH_TOLERANCE {
            ReachableToe {
                position: [target.x, target.y, target.z],
                angles,
            }
        } else {
            let p = self.toe(leg, angles);
            ReachableToe {
                position: [p.x, p.y, p.z],
                angles,
            }
        }
    }

    /// Every in-limit joint triple that puts the toe on `target` (at most four:
    /// two hip branches times two knee branches).
    pub fn inverse_kinematics(&self, leg: Leg, target: Vector3<f64>) -> Vec<[f64; 3]> {
        let g = self.leg(leg);
        let d = target - g.hip_offset;
        let lh = Self::side(leg) * g.hip_length;
        let (l1, l2) = (g.thigh_length, g.calf_length);
        // In the hip-rotated frame the thigh plane sits at y' = lh.
        let r = d.y.hypot(d.z);
        if r < lh.abs() {
            return Vec::new();
        }
        let base = d.z.atan2(d.y);
        let spread = (lh / r).clamp(-1.0, 1.0).acos();
        let mut out = Vec::with_capacity(4);
        for q0 in [base + spread, base - spread] {
            let q0 = (q0 + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            let (s0, c0) = q0.sin_cos();
            let (x, z) = (d.x, -s0 * d.y + c0 * d.z);
            let c2 = (x * x + z * z - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
            if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&c2) {
                continue;
            }
            for q2 in [c2.clamp(-1.0, 1.0).acos(), -c2.clamp(-1.0, 1.0).acos()] {
                // x = -(l1 + l2 c2) sin q1 - l2 s2 cos q1, z = -(l1 + l2 c2) cos q1 + l2 s2 sin q1
                let (a, b) = (l1 + l2 * q2.cos(), l2 * q2.sin());
                let q1 = (-(a * x) + b * z).atan2(-(a * z) - b * x);
                let q = [q0, q1, q2];
                if self.leg_within_limits(leg, q) && (self.toe(leg, q) - target).norm() <= REACH_TOLERANCE {
                    out.push(q);
                }
            }
        }
        out
    }

    /// Joint witness for a reachable `target`, searched from `start` first and
    /// falling back to the closed-form solution nearest `start`. `None` if
    /// unreachable.
    pub fn witness_near(&self, leg: Leg, target: Vector3<f64>, start: [f64; 3]) -> Option<[f64; 3]> {
        let (d2, q) = self.refine_toward(leg, target, start);
        if d2.sqrt() <= REACH_TOLERANCE {
            return Some(q);
        }
        let gap = |q: &[f64; 3]| (0..3).map(|i| (q[i] - start[i]).powi(2)).sum::<f64>();
        self.inverse_kinematics(leg, target)
            .into_iter()
            .min_by(|a, b| gap(a).total_cmp(&gap(b)))
    }

    /// Box-constrained Levenberg-Marquardt on |FK(q) - target|^2.
    fn refine_toward(&self, leg: Leg, target: Vector3<f64>, start: [f64; 3]) -> (f64, [f64; 3]) {
        let limits = self.leg(leg).limits;
        let clamp = |q: [f64; 3]| -> [f64; 3] {
            let mut out = q;
            for i in 0..3 {
                out[i] = q[i].clamp(limits[i].min, limits[i].max);
            }
            out
        };
        let mut q = clamp(start);
        let mut err = self.toe(leg, q) - target;
        let mut cost = err.norm_squared();
        let mut lambda = 1e-6;
        for _ in 0..200 {
            let jac = self.toe_jacobian(leg, q);
            let grad = jac.transpose() * err;
            // Variables pinned at a bound with the gradient pushing outward are
            // frozen for this step.
            let mut free = [true; 3];
            for i in 0..3 {
                let at_min = q[i] <= limits[i].min && grad[i] > 0.0;
                let at_max = q[i] >= limits[i].max && grad[i] < 0.0;
                free[i] = !(at_min || at_max);
            }
            let mut jtj = jac.transpose() * jac;
            let mut g = grad;
            for i in 0..3 {
                if !free[i] {
                    for k in 0..3 {
                        jtj[(i, k)] = 0.0;
                        jtj[(k, i)] = 0.0;
                    }
                    jtj[(i, i)] = 1.0;
                    g[i] = 0.0;
                }
            }
            let mut improved = false;
            for _ in 0..12 {
                let mut damped = jtj;
                for i in 0..3 {
                    damped[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
                }
                let Some(step) = damped.lu().solve(&g) else {
                    lambda *= 10.0;
                    continue;
                };
                let cand = clamp([q[0] - step[0], q[1] - step[1], q[2] - step[2]]);
                let cand_err = self.toe(leg, cand) - target;
                let cand_cost = cand_err.norm_squared();
                if cand_cost < cost {
                    q = cand;
                    err = cand_err;
                    cost = cand_cost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved || cost < 1e-26 || g.norm() < 1e-16 {
                break;
            }
        }
        (cost, q)
    }

    /// Distance from `target` to the reachable workspace of `leg`.
    pub fn workspace_distance(&self, leg: Leg, target: Vector3<f64>) -> f64 {
        let r = self.nearest_reachable(leg, target);
        (self.toe(leg, r.angles) - target).norm()
    }

    pub fn is_reachable(&self, leg: Leg, target: Vector3<f64>) -> bool {
        self.workspace_distance(leg, target) <= REACH_TOLERANCE
    }
}

/// Distance (m) under which a toe target counts as reachable.
pub const REACH_TOLERANCE: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standin_loads_and_satisfies_invariants() {
        let m = RobotModel::standin();
        for g in &m.legs {
            assert!(g.limits.iter().all(|l| l.min < l.max));
            assert!(g.hip_length > 0.0 && g.thigh_length > 0.0 && g.calf_length > 0.0);
        }
        assert!(m.masses.base > 0.0 && m.masses.foot > 0.0);
        assert!(m.within_limits(&m.nominal_pose, 0.0));
        // The only published limit fragment: FL hip must admit (0.1, 0.57).
        let fl_hip = m.joint_limit(JointId::new(Leg::FL, JointKind::Hip));
        assert!(fl_hip.min <= 0.1 && fl_hip.max >= 0.57);
    }

    #[test]
    fn zero_pose_is_straight_down() {
        let m = RobotModel::standin();
        let g = m.leg(Leg::FR);
        let p = m.forward_kinematics_toe(Leg::FR, [0.0; 3]).unwrap();
        let expect = g.hip_offset + Vector3::new(0.0, -g.hip_length, -(g.thigh_length + g.calf_length));
        assert!((p - expect).norm() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_angles() {
        let m = RobotModel::standin();
        assert!(m.forward_kinematics_toe(Leg::FL, [0.0, f64::NAN, 0.0]).is_err());
        assert!(m.forward_kinematics_toe(Leg::FL, [f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn limit_boundary_is_outside() {
        let m = RobotModel::standin();
        let mut q = m.nominal_pose;
        let j = JointId::new(Leg::RL, JointKind::Calf);
        q.set(j, m.joint_limit(j).max);
        assert!(!m.within_limits(&q, 0.01));
        assert!(!m.within_limits(&q, 0.0));
    }

    #[test]
    fn positive_hip_moves_left_toe_outward() {
        let m = RobotModel::standin();
        let a = m.toe(Leg::FL, [0.0, 0.0, -1.0]);
        let b = m.toe(Leg::FL, [0.3, 0.0, -1.0]);
        assert!(b.y > a.y);
        let c = m.toe(Leg::FR, [-0.3, 0.0, -1.0]);
        assert!(c.y < m.toe(Leg::FR, [0.0, 0.0, -1.0]).y);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = RobotModel::standin();
        let q = [0.2, -0.7, -1.3];
        let jac = m.toe_jacobian(Leg::FL, q);
        for i in 0..3 {
            let h = 1e-6;
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let fd = (m.toe(Leg::FL, qp) - m.toe(Leg::FL, qm)) / (2.0 * h);
            assert!((fd - jac.column(i)).norm() < 1e-8);
        }
    }

    #[test]
    fn nearest_reachable_is_identity_on_reachable_points() {
        let m = RobotModel::standin();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let goal = m.sample_reachable_toe_goal(Leg::FL, &mut rng);
            let r = m.nearest_reachable(Leg::FL, goal.vector());
            assert_eq!(r.position, goal.position);
            assert!((m.toe(Leg::FL, r.angles) - goal.vector()).norm() <= REACH_TOLERANCE);
            assert!(m.leg_within_limits(Leg::FL, r.angles));
        }
    }

    #[test]
    fn joint_names_round_trip() {
        for i in 0..NUM_JOINTS {
            let j = JointId::from_index(i);
            assert_eq!(j.index(), i);
            assert_eq!(j.to_string().parse::<JointId>().unwrap(), j);
        }
        assert_eq!(JointId::from_index(0).to_string(), "FL_hip_joint");
    }

    #[test]
    fn description_errors_carry_location() {
        let text = RobotModel::standin_description().replace("fl.thigh.length = 0.12", "fl.thigh.length = -0.12");
        match RobotModel::from_description(&text) {
            Err(RobotError::Parse(e)) => {
                assert!(e.message.contains("fl.thigh.length"));
                assert!(e.line > 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = format!("{}\nfl.extra = 1\n", RobotModel::standin_description());
        assert!(matches!(RobotModel::from_description(&text), Err(RobotError::Parse(_))));
    }
}
