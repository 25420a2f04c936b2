//! Sagittal five-link model: a rigid base plus one effective hind leg and one
//! effective front leg, each standing for a left/right pair (masses, gains,
//! torque limits and contact stiffness doubled).
//!
//! Generalized coordinates, in order: base `x`, `z`, elevation `phi` (0 is
//! level, `pi/2` is nose-up), hind hip, hind knee, front shoulder, front elbow.
//! Joint angles use the 3D thigh/calf convention, so the same joint limits
//! apply. With body axes `ex = (cos phi, sin phi)` and `ez = s * perp(ex)`,
//! a segment at body-relative angle `psi` points along
//! `-sin(psi) ex - cos(psi) ez`; `s = -1` gives the mirror-image robot.
//!
//! Each internal step is semi-implicit Euler: contact and gravity forces are
//! evaluated at the current state, the PD torque is taken implicitly in the
//! new velocity, and positions are advanced with the new velocity.

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observation::CONTROL_DT;
use crate::robot_model::{JointKind, Leg, RobotModel};

pub const NQ: usize = 7;
pub type Coords = SVector<f64, NQ>;
type Mass = SMatrix<f64, NQ, NQ>;
type Jac = SMatrix<f64, 2, NQ>;

pub const X: usize = 0;
pub const Z: usize = 1;
pub const PITCH: usize = 2;
pub const HIND_HIP: usize = 3;
pub const HIND_KNEE: usize = 4;
pub const FRONT_SHOULDER: usize = 5;
pub const FRONT_ELBOW: usize = 6;

/// Number of actuated joints.
pub const NA: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContactPoint {
    HindFoot,
    FrontFoot,
    HindKnee,
    FrontKnee,
    BaseRearBelly,
    BaseFrontBelly,
    BaseRearBack,
    BaseFrontBack,
}

impl ContactPoint {
    pub const ALL: [ContactPoint; 8] = [
        ContactPoint::HindFoot,
        ContactPoint::FrontFoot,
        ContactPoint::HindKnee,
        ContactPoint::FrontKnee,
        ContactPoint::BaseRearBelly,
        ContactPoint::BaseFrontBelly,
        ContactPoint::BaseRearBack,
        ContactPoint::BaseFrontBack,
    ];
}

pub const NC: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanarError {
    #[error("planar simulation diverged at step {step}")]
    Diverged { step: u64 },
    #[error("invalid planar parameters: {0}")]
    Params(String),
}

/// Tunable physics. Contact values are per foot; pairs get twice as much.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarParams {
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction: f64,
    pub internal_dt: f64,
    pub gravity: f64,
    /// Reflected rotor inertia per motor (kg m^2).
    pub rotor_inertia: f64,
    pub kp: f64,
    pub kd: f64,
    pub body_half_length: f64,
    pub body_half_height: f64,
    /// `1` for the robot, `-1` for its mirror image.
    pub handedness: f64,
}

impl Default for PlanarParams {
    fn default() -> Self {
        Self {
            contact_stiffness: 5000.0,
            contact_damping: 50.0,
            friction: 1.0,
            internal_dt: 0.002,
            gravity: 9.81,
            rotor_inertia: 0.004,
            kp: 30.0,
            kd: 3.0,
            body_half_length: 0.28,
            body_half_height: 0.05,
            handedness: 1.0,
        }
    }
}

impl PlanarParams {
    pub fn validate(&self) -> Result<(), PlanarError> {
        let positive = [
            ("contact_stiffness", self.contact_stiffness),
            ("internal_dt", self.internal_dt),
            ("body_half_length", self.body_half_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlanarError::Params(format!("{name} = {v} must be positive")));
            }
        }
        let non_negative = [
            ("contact_damping", self.contact_damping),
            ("friction", self.friction),
            ("gravity", self.gravity),
            ("rotor_inertia", self.rotor_inertia),
            ("kp", self.kp),
            ("kd", self.kd),
            ("body_half_height", self.body_half_height),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PlanarError::Params(format!("{name} = {v} must be non-negative")));
            }
        }
        if self.handedness.abs() != 1.0 {
            return Err(PlanarError::Params("handedness must be 1 or -1".into()));
        }
        let substeps = CONTROL_DT / self.internal_dt;
        if (substeps - substeps.round()).abs() > 1e-9 {
            return Err(PlanarError::Params(format!("internal_dt {} must divide {CONTROL_DT}", self.internal_dt)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LegParams {
    mount: f64,
    thigh: f64,
    calf: f64,
    /// Hip motor mass (rigid with the base), thigh, calf and foot masses.
    masses: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarModel {
    pub params: PlanarParams,
    base_mass: f64,
    base_inertia: f64,
    hind: LegParams,
    front: LegParams,
    /// Per effective joint, `[min, max]`.
    pub limits: [[f64; 2]; NA],
    pub torque_limits: [f64; NA],
    /// Nominal sitting targets for the four effective joints.
    pub nominal: [f64; NA],
}

/// Full simulation state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarState {
    pub q: [f64; NQ],
    pub v: [f64; NQ],
    /// Tangential spring anchors (world x) of the points in contact.
    pub anchors: [Option<f64>; NC],
    pub contacts: [bool; NC],
    /// Effective joint torques applied during the last internal step.
    pub torques: [f64; NA],
    pub step: u64,
}

impl PlanarState {
    pub fn at(q: [f64; NQ]) -> Self {
        Self {
            q,
            v: [0.0; NQ],
            anchors: [None; NC],
            contacts: [false; NC],
            torques: [0.0; NA],
            step: 0,
        }
    }

    /// Reflection `x -> -x`, valid for the model with opposite handedness.
    pub fn mirrored(&self) -> Self {
        let mut m = *self;
        m.q[X] = -self.q[X];
        m.v[X] = -self.v[X];
        m.q[PITCH] = std::f64::consts::PI - self.q[PITCH];
        m.v[PITCH] = -self.v[PITCH];
        m.anchors = self.anchors.map(|a| a.map(|x| -x));
        m
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy)]
struct PointKin {
    p: Vector2<f64>,
    jac: Jac,
    /// Acceleration with zero generalized acceleration.
    bias: Vector2<f64>,
}

fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

fn col(jac: &mut Jac, i: usize, c: Vector2<f64>) {
    jac[(0, i)] = c.x;
    jac[(1, i)] = c.y;
}

/// Positions, Jacobians and bias accelerations of every mass and contact point.
#[derive(Debug, Clone, Copy)]
struct Kinematics {
    masses: [(f64, PointKin); 9],
    contacts: [PointKin; NC],
}

impl PlanarModel {
    pub fn new(robot: &RobotModel, params: PlanarParams) -> Result<Self, PlanarError> {
        params.validate()?;
        let leg = |l: Leg| {
            let g = robot.leg(l);
            LegParams {
                mount: g.hip_offset.x,
                thigh: g.thigh_length,
                calf: g.calf_length,
                masses: [
                    2.0 * robot.masses.hip,
                    2.0 * robot.masses.thigh,
                    2.0 * robot.masses.calf,
                    2.0 * robot.masses.foot,
                ],
            }
        };
        let (hind, front) = (leg(Leg::RL), leg(Leg::FL));
        let lim = |l: Leg, k: JointKind| {
            let j = robot.leg(l).limits[k as usize];
            [j.min, j.max]
        };
        let tl = |l: Leg, k: JointKind| 2.0 * robot.leg(l).torque_limits[k as usize];
        let nom = |l: Leg, k: JointKind| robot.nominal_pose.leg(l)[k as usize];
        let (hl, hh) = (params.body_half_length, params.body_half_height);
        Ok(Self {
            params,
            base_mass: robot.masses.base,
            base_inertia: robot.masses.base * ((2.0 * hl).powi(2) + (2.0 * hh).powi(2)) / 12.0,
            hind,
            front,
            limits: [
                lim(Leg::RL, JointKind::Thigh),
                lim(Leg::RL, JointKind::Calf),
                lim(Leg::FL, JointKind::Thigh),
                lim(Leg::FL, JointKind::Calf),
            ],
            torque_limits: [
                tl(Leg::RL, JointKind::Thigh),
                tl(Leg::RL, JointKind::Calf),
                tl(Leg::FL, JointKind::Thigh),
                tl(Leg::FL, JointKind::Calf),
            ],
            nominal: [
                nom(Leg::RL, JointKind::Thigh),
                nom(Leg::RL, JointKind::Calf),
                nom(Leg::FL, JointKind::Thigh),
                nom(Leg::FL, JointKind::Calf),
            ],
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.base_mass + self.hind.masses.iter().sum::<f64>() + self.front.masses.iter().sum::<f64>()
    }

    pub fn substeps(&self) -> usize {
        (CONTROL_DT / self.params.internal_dt).round() as usize
    }

    fn kinematics(&self, q: &[f64; NQ], v: &[f64; NQ]) -> Kinematics {
        let s = self.params.handedness;
        let base = Vector2::new(q[X], q[Z]);
        let (sp, cp) = q[PITCH].sin_cos();
        let ex = Vector2::new(cp, sp);
        let ez = perp(ex) * s;
        let w = v[PITCH];

        let body_point = |r: Vector2<f64>| {
            let mut jac = Jac::zeros();
            col(&mut jac, X, Vector2::new(1.0, 0.0));
            col(&mut jac, Z, Vector2::new(0.0, 1.0));
            col(&mut jac, PITCH, perp(r));
            PointKin {
                p: base + r,
                jac,
                bias: -r * (w * w),
            }
        };

        // Points along one leg: mount, thigh middle, knee, calf middle, toe.
        let leg_points = |lp: &LegParams, hip: usize, knee: usize| -> [PointKin; 5] {
            let r_m = ex * lp.mount;
            let seg = |psi: f64| -(ex * psi.sin()) - ez * psi.cos();
            let d1 = seg(q[hip]);
            let d2 = seg(q[hip] + q[knee]);
            let w1 = w - s * v[hip];
            let w2 = w - s * (v[hip] + v[knee]);
            let mount = body_point(r_m);
            let along = |f1: f64, f2: f64| {
                let a = d1 * (lp.thigh * f1);
                let b = d2 * (lp.calf * f2);
                let mut k = mount;
                k.p += a + b;
                k.bias += -a * (w1 * w1) - b * (w2 * w2);
                col(&mut k.jac, PITCH, perp(r_m + a + b));
                col(&mut k.jac, hip, perp(a + b) * (-s));
                col(&mut k.jac, knee, perp(b) * (-s));
                k
            };
            [mount, along(0.5, 0.0), along(1.0, 0.0), along(1.0, 0.5), along(1.0, 1.0)]
        };

        let h = leg_points(&self.hind, HIND_HIP, HIND_KNEE);
        let f = leg_points(&self.front, FRONT_SHOULDER, FRONT_ELBOW);
        let (hl, hh) = (self.params.body_half_length, self.params.body_half_height);
        let corner = |a: f64, b: f64| body_point(ex * a + ez * b);
        let hm = self.hind.masses;
        let fm = self.front.masses;
        Kinematics {
            masses: [
                (self.base_mass, body_point(Vector2::zeros())),
                (hm[0], h[0]),
                (hm[1], h[1]),
                (hm[2], h[3]),
                (hm[3], h[4]),
                (fm[0], f[0]),
                (fm[1], f[1]),
                (fm[2], f[3]),
                (fm[3], f[4]),
            ],
            contacts: [
                h[4],
                f[4],
                h[2],
                f[2],
                corner(-hl, -hh),
                corner(hl, -hh),
                corner(-hl, hh),
                corner(hl, hh),
            ],
        }
    }

    /// Ground point positions, world frame, in [`ContactPoint::ALL`] order.
    pub fn contact_positions(&self, state: &PlanarState) -> [Vector2<f64>; NC] {
        self.kinematics(&state.q, &state.v).contacts.map(|k| k.p)
    }

    /// Ground point velocities, world frame.
    pub fn contact_velocities(&self, state: &PlanarState) -> [Vector2<f64>; NC] {
        let v = Coords::from(state.v);
        self.kinematics(&state.q, &state.v).contacts.map(|k| k.jac * v)
    }

    /// Kinetic plus gravitational potential energy (contact springs excluded).
    pub fn energy(&self, state: &PlanarState) -> f64 {
        let kin = self.kinematics(&state.q, &state.v);
        let v = Coords::from(state.v);
        let m = self.mass_matrix(&kin);
        let potential: f64 = kin.masses.iter().map(|(mass, k)| mass * self.params.gravity * k.p.y).sum();
        0.5 * v.dot(&(m * v)) + potential
    }

    fn mass_matrix(&self, kin: &Kinematics) -> Mass {
        let mut m = Mass::zeros();
        for (mass, k) in &kin.masses {
            m += k.jac.transpose() * k.jac * *mass;
        }
        m[(PITCH, PITCH)] += self.base_inertia;
        for j in HIND_HIP..NQ {
            m[(j, j)] += 2.0 * self.params.rotor_inertia;
        }
        m
    }

    /// Spring-damper normal force and anchored Coulomb tangential force.
    /// Updates anchors and contact flags in place.
    fn contact_forces(&self, kin: &Kinematics, v: &Coords, state: &mut PlanarState) -> [Vector2<f64>; NC] {
        let p = &self.params;
        let (k, c) = (2.0 * p.contact_stiffness, 2.0 * p.contact_damping);
        let mut out = [Vector2::zeros(); NC];
        for (i, pt) in kin.contacts.iter().enumerate() {
            let depth = -pt.p.y;
            if depth <= 0.0 {
                state.anchors[i] = None;
                state.contacts[i] = false;
                continue;
            }
            state.contacts[i] = true;
            let vel = pt.jac * v;
            let normal = (k * depth - c * vel.y).max(0.0);
            let anchor = *state.anchors[i].get_or_insert(pt.p.x);
            let mut tangential = -k * (pt.p.x - anchor) - c * vel.x;
            let cap = p.friction * normal;
            if tangential.abs() > cap {
                tangential = cap.copysign(tangential);
                // Slide the anchor so the spring alone gives the capped force.
                state.anchors[i] = Some(pt.p.x + tangential / k);
            }
            out[i] = Vector2::new(tangential, normal);
        }
        out
    }

    fn internal_step(&self, state: &mut PlanarState, targets: &[f64; NA]) {
        let h = self.params.internal_dt;
        let kin = self.kinematics(&state.q, &state.v);
        let v = Coords::from(state.v);
        let m = self.mass_matrix(&kin);

        let mut force = Coords::zeros();
        let g = Vector2::new(0.0, -self.params.gravity);
        for (mass, k) in &kin.masses {
            force += k.jac.transpose() * ((g - k.bias) * *mass);
        }
        let contact = self.contact_forces(&kin, &v, state);
        for (f, k) in contact.iter().zip(&kin.contacts) {
            force += k.jac.transpose() * f;
        }

        // PD torque implicit in the new velocity; saturated joints switch to
        // a constant torque at the limit and the solve is repeated.
        let kp = 2.0 * self.params.kp;
        let kd = 2.0 * self.params.kd;
        let mut saturated: [Option<f64>; NA] = [None; NA];
        let mut v_new = v;
        for _ in 0..=NA {
            let mut a = m;
            let mut rhs = m * v + force * h;
            for j in 0..NA {
                let i = HIND_HIP + j;
                match saturated[j] {
                    Some(tau) => rhs[i] += h * tau,
                    None => {
                        a[(i, i)] += h * (kd + h * kp);
                        rhs[i] += h * kp * (targets[j] - state.q[i]);
                    }
                }
            }
            v_new = a.cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(|| Coords::from_element(f64::NAN));
            let mut changed = false;
            for j in 0..NA {
                let i = HIND_HIP + j;
                if saturated[j].is_none() {
                    let tau = kp * (targets[j] - state.q[i] - h * v_new[i]) - kd * v_new[i];
                    let lim = self.torque_limits[j];
                    if tau.abs() > lim {
                        saturated[j] = Some(lim.copysign(tau));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for j in 0..NA {
            let i = HIND_HIP + j;
            state.torques[j] = saturated[j].unwrap_or_else(|| kp * (targets[j] - state.q[i] - h * v_new[i]) - kd * v_new[i]);
        }
        for i in 0..NQ {
            state.v[i] = v_new[i];
            state.q[i] += h * v_new[i];
        }
    }

    /// Advances one control period with PD targets for the four effective
    /// joints (hind hip, hind knee, front shoulder, front elbow).
    pub fn step(&self, state: &PlanarState, targets: &[f64; NA]) -> Result<PlanarState, PlanarError> {
        let mut s = *state;
        for _ in 0..self.substeps() {
            self.internal_step(&mut s, targets);
        }
        s.step += 1;
        let fast = s.v.iter().any(|x| x.abs() > 1e3);
        if !s.is_finite() || fast {
            return Err(PlanarError::Diverged { step: s.step });
        }
        // Report contact flags for the final configuration.
        let kin = self.kinematics(&s.q, &s.v);
        for (flag, k) in s.contacts.iter_mut().zip(&kin.contacts) {
            *flag = k.p.y < 0.0;
        }
        Ok(s)
    }

    /// Base `z` that puts the lowest contact point exactly on the ground.
    pub fn ground_height(&self, q: [f64; NQ]) -> f64 {
        let mut probe = q;
        probe[Z] = 0.0;
        let lowest = self
            .kinematics(&probe, &[0.0; NQ])
            .contacts
            .iter()
            .map(|k| k.p.y)
            .fold(f64::INFINITY, f64::min);
        -lowest
    }

    /// Settles the robot from the nominal sitting pose with nominal targets
    /// until it stops moving. Used as the episode start.
    pub fn rest_state(&self) -> Result<PlanarState, PlanarError> {
        let mut q = [0.0; NQ];
        q[HIND_HIP..].copy_from_slice(&self.nominal);
        q[PITCH] = if self.params.handedness > 0.0 { 0.0 } else { std::f64::consts::PI };
        q[Z] = self.ground_height(q) + 0.005;
        let mut s = PlanarState::at(q);
        for _ in 0..500 {
            s = self.step(&s, &self.nominal)?;
        }
        s.step = 0;
        Ok(s)
    }
}
