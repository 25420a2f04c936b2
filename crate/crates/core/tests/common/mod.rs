//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the kinematics or dynamics under test.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{UnitQuaternion, Vector3};
use quadbiped_core::reward::EnvState;
use quadbiped_core::retarget::SkeletonFrame;
use quadbiped_core::target_gen::MotionTarget;
use quadbiped_core::{JointId, JointVector, Leg, RobotModel};
use rand::Rng;

type Mat4 = [[f64; 4]; 4];

fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn translation(x: f64, y: f64, z: f64) -> Mat4 {
    [[1.0, 0.0, 0.0, x], [0.0, 1.0, 0.0, y], [0.0, 0.0, 1.0, z], [0.0, 0.0, 0.0, 1.0]]
}

fn rot_x(a: f64) -> Mat4 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn rot_y(a: f64) -> Mat4 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0], [-s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

/// Toe position from a chain of 4x4 homogeneous transforms.
pub fn fk_homogeneous(model: &RobotModel, leg: Leg, q: [f64; 3]) -> [f64; 3] {
    let g = model.leg(leg);
    let side = if leg.is_left() { 1.0 } else { -1.0 };
    let chain = [
        translation(g.hip_offset.x, g.hip_offset.y, g.hip_offset.z),
        rot_x(q[0]),
        translation(0.0, side * g.hip_length, 0.0),
        rot_y(q[1]),
        translation(0.0, 0.0, -g.thigh_length),
        rot_y(q[2]),
        translation(0.0, 0.0, -g.calf_length),
    ];
    let t = chain.iter().skip(1).fold(chain[0], |acc, m| mul(&acc, m));
    [t[0][3], t[1][3], t[2][3]]
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn random_in_limits<R: Rng>(model: &RobotModel, leg: Leg, rng: &mut R) -> [f64; 3] {
    let g = model.leg(leg);
    std::array::from_fn(|k| rng.random_range(g.limits[k].min..=g.limits[k].max))
}

/// Recovers an in-limit joint triple whose oracle FK lands on `target`, by
/// damped Gauss-Newton with finite-difference Jacobians from a grid of
/// starts. Returns the best triple and its residual.
pub fn preimage(model: &RobotModel, leg: Leg, target: [f64; 3]) -> ([f64; 3], f64) {
    let g = model.leg(leg);
    let lim: [[f64; 2]; 3] = std::array::from_fn(|k| [g.limits[k].min, g.limits[k].max]);
    let clamp = |q: [f64; 3]| -> [f64; 3] { std::array::from_fn(|k| q[k].clamp(lim[k][0], lim[k][1])) };
    let residual = |q: [f64; 3]| {
        let p = fk_homogeneous(model, leg, q);
        [p[0] - target[0], p[1] - target[1], p[2] - target[2]]
    };
    let norm = |r: [f64; 3]| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let mut best = ([0.0; 3], f64::INFINITY);
    let grid = 4;
    for a in 0..grid {
        for b in 0..grid {
            for c in 0..grid {
                let frac = |i: usize| (i as f64 + 0.5) / grid as f64;
                let mut q = [
                    lim[0][0] + frac(a) * (lim[0][1] - lim[0][0]),
                    lim[1][0] + frac(b) * (lim[1][1] - lim[1][0]),
                    lim[2][0] + frac(c) * (lim[2][1] - lim[2][0]),
                ];
                for _ in 0..60 {
                    let r = residual(q);
                    if norm(r) < 1e-12 {
                        break;
                    }
                    let mut jac = [[0.0; 3]; 3];
                    for k in 0..3 {
                        let h = 1e-7;
                        let mut qp = q;
                        qp[k] += h;
                        let mut qm = q;
                        qm[k] -= h;
                        let (rp, rm) = (residual(qp), residual(qm));
                        for i in 0..3 {
                            jac[i][k] = (rp[i] - rm[i]) / (2.0 * h);
                        }
                    }
                    // (J^T J + mu I) dq = -J^T r
                    let mu = 1e-10;
                    let mut a_m = [[0.0; 3]; 3];
                    let mut rhs = [0.0; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            a_m[i][j] = (0..3).map(|k| jac[k][i] * jac[k][j]).sum::<f64>() + if i == j { mu } else { 0.0 };
                        }
                        rhs[i] = -(0..3).map(|k| jac[k][i] * r[k]).sum::<f64>();
                    }
                    let Some(dq) = solve3(a_m, rhs) else { break };
                    q = clamp([q[0] + dq[0], q[1] + dq[1], q[2] + dq[2]]);
                }
                let e = norm(residual(q));
                if e < best.1 {
                    best = (q, e);
                }
            }
        }
    }
    best
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 {
        return None;
    }
    Some(std::array::from_fn(|c| {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        det(m) / d
    }))
}

/// Unit-step response of `I x'' + kd x' + kp x = kp` from rest, closed form.
pub fn second_order_step(inertia: f64, kp: f64, kd: f64, t: f64) -> f64 {
    let wn = (kp / inertia).sqrt();
    let zeta = kd / (2.0 * (kp * inertia).sqrt());
    if (zeta - 1.0).abs() < 1e-9 {
        1.0 - (1.0 + wn * t) * (-wn * t).exp()
    } else if zeta > 1.0 {
        let s = (zeta * zeta - 1.0).sqrt();
        let (r1, r2) = (-wn * (zeta - s), -wn * (zeta + s));
        1.0 - (r2 * (r1 * t).exp() - r1 * (r2 * t).exp()) / (r2 - r1)
    } else {
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        1.0 - (-zeta * wn * t).exp() * ((wd * t).cos() + zeta * wn / wd * (wd * t).sin())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    /// 10% to 90% rise time (s).
    pub rise: f64,
    /// Last time outside the 2% band (s).
    pub settling: f64,
    /// Peak overshoot as a fraction of the step.
    pub overshoot: f64,
}

/// Metrics of a normalized response sampled at `(t, y)` pairs, with linear
/// interpolation between samples for the crossing times.
pub fn step_metrics(samples: &[(f64, f64)]) -> StepMetrics {
    let crossing = |level: f64| {
        samples
            .windows(2)
            .find(|w| w[0].1 < level && w[1].1 >= level)
            .map(|w| w[0].0 + (level - w[0].1) / (w[1].1 - w[0].1) * (w[1].0 - w[0].0))
            .expect("response never crosses the level")
    };
    let mut settling = 0.0;
    for w in samples.windows(2) {
        let out = |y: f64| (y - 1.0).abs() > 0.02;
        if out(w[0].1) && !out(w[1].1) {
            let level = if w[0].1 < 1.0 { 0.98 } else { 1.02 };
            settling = w[0].0 + (level - w[0].1) / (w[1].1 - w[0].1) * (w[1].0 - w[0].0);
        } else if out(w[1].1) {
            settling = w[1].0;
        }
    }
    let peak = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    StepMetrics {
        rise: crossing(0.9) - crossing(0.1),
        settling,
        overshoot: (peak - 1.0).max(0.0),
    }
}

pub fn random_unit_quaternion<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let axis = loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n < 1.0 {
            break v / n;
        }
    };
    UnitQuaternion::from_scaled_axis(axis * rng.random_range(0.0..PI))
}

/// Orientation with body elevation `phi` and yaw `yaw`.
pub fn pitched(phi: f64, yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -phi)
}

/// A random but physically plausible state. When `upright` is set the base
/// lies inside the upright set of `target_height` and `pitch_band`.
pub fn random_env_state<R: Rng>(model: &RobotModel, rng: &mut R, upright: bool, target_height: f64, pitch_band: f64) -> EnvState {
    let mut s = EnvState::resting(model, 0.0);
    if upright {
        s.base.position.z = target_height + rng.random_range(0.0..0.1);
        let phi = FRAC_PI_2 - rng.random_range(0.0..=pitch_band);
        s.base.orientation = pitched(phi, rng.random_range(-PI..PI));
    } else {
        s.base.position.z = rng.random_range(0.0..1.5 * target_height);
        s.base.orientation = if rng.random_bool(0.5) {
            pitched(rng.random_range(-FRAC_PI_2..=FRAC_PI_2), rng.random_range(-PI..PI))
        } else {
            random_unit_quaternion(rng)
        };
    }
    s.base.position.x = rng.random_range(-1.0..1.0);
    s.base.position.y = rng.random_range(-1.0..1.0);
    let v3 = |rng: &mut R, r: f64| Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r));
    s.base_lin_vel = v3(rng, 1.0);
    s.base_ang_vel = v3(rng, 2.0);
    s.heading = rng.random_range(-PI..PI);
    let mut q = JointVector::zeros();
    let mut qd = JointVector::zeros();
    let mut action = JointVector::zeros();
    let mut prev = JointVector::zeros();
    for i in 0..12 {
        let lim = model.joint_limit(JointId::from_index(i));
        q.0[i] = rng.random_range(lim.min..=lim.max);
        qd.0[i] = rng.random_range(-15.0..15.0);
        action.0[i] = rng.random_range(lim.min..=lim.max);
        prev.0[i] = rng.random_range(lim.min..=lim.max);
    }
    s.q = q;
    s.qd = qd;
    s.action = action;
    s.prev_action = prev;
    let tl = model.torque_limits();
    s.torques = std::array::from_fn(|i| rng.random_range(-tl[i]..=tl[i]));
    s.foot_contacts = std::array::from_fn(|_| rng.random_bool(0.5));
    s.foot_heights = std::array::from_fn(|_| rng.random_range(0.0..0.1));
    s.foot_velocities = std::array::from_fn(|_| v3(rng, 0.5));
    s.non_foot_collision = rng.random_bool(0.2);
    s.rear_leg_collision = rng.random_bool(0.2);
    s.step = rng.random_range(0..1000);
    s.target = random_target(model, rng);
    s
}

pub fn random_target<R: Rng>(model: &RobotModel, rng: &mut R) -> MotionTarget {
    let fl = model.sample_reachable_toe_goal(Leg::FL, rng);
    let fr = model.sample_reachable_toe_goal(Leg::FR, rng);
    MotionTarget {
        v_x: f64::from(rng.random_range(-3..=3)) / 10.0,
        v_y: 0.0,
        heading_des: rng.random_range(-PI..PI),
        yaw_rate_obs: 0.0,
        toe_des: [fl.vector(), fr.vector()],
        toe_witness: Some([fl.angles, fr.angles]),
    }
}

/// An upright human skeleton facing +x in its own frame, with both wrists
/// somewhere in front of the chest, placed at `t`.
pub fn random_skeleton<R: Rng>(rng: &mut R, t: f64) -> SkeletonFrame {
    let mut lm = BTreeMap::new();
    let shoulder = rng.random_range(0.17..0.22);
    let torso = rng.random_range(0.45..0.6);
    let mut arm = |side: f64| {
        [
            rng.random_range(0.1..0.55),
            side * rng.random_range(0.05..0.35),
            rng.random_range(-0.3..0.3),
        ]
    };
    let (lw, rw) = (arm(1.0), arm(-1.0));
    lm.insert("left_shoulder".to_string(), [0.0, shoulder, 0.0]);
    lm.insert("right_shoulder".to_string(), [0.0, -shoulder, 0.0]);
    lm.insert("left_wrist".to_string(), lw);
    lm.insert("right_wrist".to_string(), rw);
    lm.insert("left_hip".to_string(), [0.0, 0.12, -torso]);
    lm.insert("right_hip".to_string(), [0.0, -0.12, -torso]);
    SkeletonFrame { t, landmarks: lm }
}
