//! Fixed-base, joint-decoupled actuator plant used for calibration.
//!
//! Each joint obeys
//!
//! ```text
//! I_eff * qdd = tau_pd(delayed target) - b * qd - f * sat(qd / v_eps) + tau_g(q) + tau_stop
//! ```
//!
//! with `I_eff` from the scaled segment point masses about the joint axis at a
//! frozen configuration, `tau_g` the gravity torque of the distal masses, and a
//! stiff spring-damper outside the joint limits. Integration is backward
//! Euler at 1 kHz; the per-joint implicit equation is piecewise linear in the
//! new velocity and is solved exactly, including torque saturation. Output is
//! every fifth internal state (200 Hz), starting at `t = 0`.

use std::io::{Read, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::observation::{CONTROL_DT, DEFAULT_KD, DEFAULT_KP};
use crate::robot_model::{JointId, JointVector, Leg, RobotModel, NUM_JOINTS};

pub const INTERNAL_DT: f64 = 0.001;
pub const TRACE_DT: f64 = 0.005;
pub const SUBSTEPS_PER_SAMPLE: usize = 5;
pub const SAMPLES_PER_ACTION: usize = 4;
pub const GRAVITY: f64 = 9.81;

/// Calibratable plant parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimParams {
    /// Coulomb friction magnitude (N m).
    pub joint_friction: f64,
    /// Viscous damping (N m s / rad).
    pub joint_damping: f64,
    /// Multipliers on hip, thigh, calf and foot masses.
    pub mass_scales: [f64; 4],
    /// Actuation latency (s).
    pub delay: f64,
    /// Multiplier on both PD gains.
    pub pd_scale: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            joint_friction: 0.0,
            joint_damping: 0.0,
            mass_scales: [1.0; 4],
            delay: 0.0,
            pd_scale: 1.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |what: &str| Err(PlantError::InvalidParams(what.to_string()));
        if !(self.joint_friction >= 0.0) {
            return bad("joint_friction must be >= 0");
        }
        if !(self.joint_damping >= 0.0) {
            return bad("joint_damping must be >= 0");
        }
        if !(self.delay >= 0.0) || !self.delay.is_finite() {
            return bad("delay must be >= 0");
        }
        if self.mass_scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("mass_scales must be > 0");
        }
        if !(self.pd_scale > 0.0) || !self.pd_scale.is_finite() {
            return bad("pd_scale must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantConfig {
    pub kp: f64,
    pub kd: f64,
    pub gravity: bool,
    /// Reflected rotor inertia added to every joint (kg m^2).
    pub rotor_inertia: f64,
    /// Friction smoothing velocity (rad/s).
    pub v_eps: f64,
    pub limit_stiffness: f64,
    pub limit_damping: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            kp: DEFAULT_KP,
            kd: DEFAULT_KD,
            gravity: true,
            rotor_inertia: 0.004,
            v_eps: 1e-3,
            limit_stiffness: 500.0,
            limit_damping: 5.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("simulation diverged at t = {t:.3} s (internal step {step}) on {joint}")]
    Diverged { t: f64, step: usize, joint: JointId },
    #[error("action sequence is empty")]
    EmptyActions,
    #[error("non-finite action target at index {0}")]
    NonFiniteAction(usize),
    #[error("{what} csv: {message}")]
    Format { what: &'static str, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// PD targets at 50 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence {
    pub targets: Vec<JointVector>,
}

impl ActionSequence {
    pub fn duration(&self) -> f64 {
        self.targets.len() as f64 * CONTROL_DT
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PlantError> {
        write_joint_csv(out, CONTROL_DT, &self.targets)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, PlantError> {
        let targets = read_joint_csv(input, CONTROL_DT, "action")?;
        Ok(Self { targets })
    }
}

/// Joint positions at 200 Hz; sample `i` is at `t = 0.005 * i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrace {
    pub samples: Vec<JointVector>,
}

impl JointTrace {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * TRACE_DT
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PlantError> {
        write_joint_csv(out, TRACE_DT, &self.samples)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, PlantError> {
        let samples = read_joint_csv(input, TRACE_DT, "trace")?;
        Ok(Self { samples })
    }
}

fn joint_header() -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..NUM_JOINTS).map(|i| JointId::from_index(i).to_string()))
        .collect()
}

/// Time stamp of sample `i`, printed from `i * dt` so round trips are exact.
fn stamp(i: usize, dt: f64) -> f64 {
    i as f64 * dt
}

fn write_joint_csv<W: Write>(out: W, dt: f64, rows: &[JointVector]) -> Result<(), PlantError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(joint_header())?;
    for (i, row) in rows.iter().enumerate() {
        w.write_record(std::iter::once(stamp(i, dt)).chain(row.0.iter().copied()).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn read_joint_csv<R: Read>(input: R, dt: f64, what: &'static str) -> Result<Vec<JointVector>, PlantError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    let expected = joint_header();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(PlantError::Format {
            what,
            message: format!("header must be `{}`", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut v = [0.0; NUM_JOINTS + 1];
        for (k, field) in rec.iter().enumerate() {
            v[k] = field.trim().parse().map_err(|_| PlantError::Format {
                what,
                message: format!("row {}: `{field}` is not a number", i + 1),
            })?;
        }
        if (v[0] - stamp(i, dt)).abs() > 1e-9 {
            return Err(PlantError::Format {
                what,
                message: format!("row {}: time {} breaks the uniform {dt} s spacing", i + 1, v[0]),
            });
        }
        let mut q = [0.0; NUM_JOINTS];
        q.copy_from_slice(&v[1..]);
        rows.push(JointVector(q));
    }
    Ok(rows)
}

/// Point masses of one leg: hip housing at the thigh joint, thigh and calf at
/// their midpoints, foot at the toe. Index order hip, thigh, calf, foot.
struct LegPoints {
    origins: [Vector3<f64>; 3],
    axes: [Vector3<f64>; 3],
    points: [Vector3<f64>; 4],
}

fn leg_points(model: &RobotModel, leg: Leg, angles: [f64; 3]) -> LegPoints {
    let f = model.leg_frames(leg, angles);
    let thigh_mid = (f.origins[1] + f.knee) * 0.5;
    let calf_mid = (f.knee + f.toe) * 0.5;
    LegPoints {
        origins: f.origins,
        axes: f.axes,
        points: [f.origins[1], thigh_mid, calf_mid, f.toe],
    }
}

/// Segments distal to joint `j` (0 hip, 1 thigh, 2 calf).
const DISTAL: [&[usize]; 3] = [&[0, 1, 2, 3], &[1, 2, 3], &[2, 3]];

fn segment_masses(model: &RobotModel, xi: &SimParams) -> [f64; 4] {
    let m = &model.masses;
    [
        m.hip * xi.mass_scales[0],
        m.thigh * xi.mass_scales[1],
        m.calf * xi.mass_scales[2],
        m.foot * xi.mass_scales[3],
    ]
}

/// Diagonal joint inertias at `frozen_q`: rotor inertia plus the
/// point-mass `m r_perp^2` of every distal segment.
pub fn effective_inertia(model: &RobotModel, xi: &SimParams, frozen_q: &JointVector, config: &PlantConfig) -> [f64; NUM_JOINTS] {
    let masses = segment_masses(model, xi);
    let mut out = [0.0; NUM_JOINTS];
    for leg in Leg::ALL {
        let lp = leg_points(model, leg, frozen_q.leg(leg));
        for j in 0..3 {
            let mut inertia = config.rotor_inertia;
            for &k in DISTAL[j] {
                let r = lp.points[k] - lp.origins[j];
                let along = r.dot(&lp.axes[j]);
                inertia += masses[k] * (r.norm_squared() - along * along).max(0.0);
            }
            out[leg.index() * 3 + j] = inertia;
        }
    }
    out
}

/// Gravity torque on every joint of a base-fixed, level robot.
pub fn gravity_torques(model: &RobotModel, xi: &SimParams, q: &JointVector) -> [f64; NUM_JOINTS] {
    let masses = segment_masses(model, xi);
    let g = Vector3::new(0.0, 0.0, -GRAVITY);
    let mut out = [0.0; NUM_JOINTS];
    for leg in Leg::ALL {
        let lp = leg_points(model, leg, q.leg(leg));
        for j in 0..3 {
            let mut tau = 0.0;
            for &k in DISTAL[j] {
                let r = lp.points[k] - lp.origins[j];
                tau += lp.axes[j].dot(&r.cross(&(g * masses[k])));
            }
            out[leg.index() * 3 + j] = tau;
        }
    }
    out
}

/// Solves `a v + f sat(v / eps) = c` for `v` (`a > 0`, `f >= 0`).
fn solve_velocity(a: f64, f: f64, eps: f64, c: f64) -> f64 {
    if f == 0.0 {
        return c / a;
    }
    let v = c / (a + f / eps);
    if v.abs() <= eps {
        v
    } else if c > 0.0 {
        (c - f) / a
    } else {
        (c + f) / a
    }
}

/// Index of the action in force at time `t` under latency `delay`.
pub fn delayed_index(t: f64, delay: f64, len: usize) -> usize {
    let k = ((t - delay) / CONTROL_DT + 1e-9).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(len - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantRun {
    pub trace: JointTrace,
    /// Motor torque applied during each internal step, when requested.
    pub torques: Option<Vec<[f64; NUM_JOINTS]>>,
    /// Joint velocities at each output sample, when requested.
    pub velocities: Option<Vec<JointVector>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub record_torques: bool,
    pub record_velocities: bool,
}

/// Replays `actions` open loop. The joints start at the first target with
/// zero velocity.
pub fn simulate_open_loop(model: &RobotModel, xi: &SimParams, actions: &ActionSequence) -> Result<JointTrace, PlantError> {
    Ok(simulate(model, xi, actions, &PlantConfig::default(), RunOptions::default())?.trace)
}

pub fn simulate(
    model: &RobotModel,
    xi: &SimParams,
    actions: &ActionSequence,
    config: &PlantConfig,
    options: RunOptions,
) -> Result<PlantRun, PlantError> {
    xi.validate()?;
    if actions.targets.is_empty() {
        return Err(PlantError::EmptyActions);
    }
    if let Some(i) = actions.targets.iter().position(|t| t.0.iter().any(|v| !v.is_finite())) {
        return Err(PlantError::NonFiniteAction(i));
    }
    let n_actions = actions.targets.len();
    let n_samples = n_actions * SAMPLES_PER_ACTION;
    let n_steps = n_samples * SUBSTEPS_PER_SAMPLE;
    let h = INTERNAL_DT;

    let inertia = effective_inertia(model, xi, &actions.targets[0], config);
    let torque_limits = model.torque_limits();
    let limits: Vec<_> = (0..NUM_JOINTS).map(|i| model.joint_limit(JointId::from_index(i))).collect();
    let kp = config.kp * xi.pd_scale;
    let kd = config.kd * xi.pd_scale;
    let b = xi.joint_damping;
    let fr = xi.joint_friction;
    let (ks, ds) = (config.limit_stiffness, config.limit_damping);

    let mut q = actions.targets[0];
    let mut v = JointVector::zeros();
    let mut samples = Vec::with_capacity(n_samples);
    let mut torques = options.record_torques.then(|| Vec::with_capacity(n_steps));
    let mut velocities = options.record_velocities.then(|| Vec::with_capacity(n_samples));

    for n in 0..n_steps {
        if n % SUBSTEPS_PER_SAMPLE == 0 {
            samples.push(q);
            if let Some(vs) = velocities.as_mut() {
                vs.push(v);
            }
        }
        let t = n as f64 * h;
        let target = &actions.targets[delayed_index(t, xi.delay, n_actions)];
        let tau_g = if config.gravity {
            gravity_torques(model, xi, &q)
        } else {
            [0.0; NUM_JOINTS]
        };
        let mut applied = [0.0; NUM_JOINTS];
        for i in 0..NUM_JOINTS {
            let (qi, vi, ti) = (q.0[i], v.0[i], target.0[i]);
            let inv_h = inertia[i] / h;
            // Passive part: inertia, damping, gravity and the limit stop.
            let mut a_passive = inv_h + b;
            let mut c_passive = inv_h * vi + tau_g[i];
            let lim = &limits[i];
            if qi > lim.max {
                a_passive += ks * h + ds;
                c_passive -= ks * (qi - lim.max);
            } else if qi < lim.min {
                a_passive += ks * h + ds;
                c_passive += ks * (lim.min - qi);
            }
            let a = a_passive + kp * h + kd;
            let c = c_passive + kp * (ti - qi);
            let mut vn = solve_velocity(a, fr, config.v_eps, c);
            let mut tau = kp * (ti - qi - h * vn) - kd * vn;
            if tau.abs() > torque_limits[i] {
                tau = tau.signum() * torque_limits[i];
                vn = solve_velocity(a_passive, fr, config.v_eps, c_passive + tau);
            }
            applied[i] = tau;
            v.0[i] = vn;
            q.0[i] = qi + h * vn;
            if !q.0[i].is_finite() || q.0[i].abs() > 1e3 || !vn.is_finite() {
                return Err(PlantError::Diverged {
                    t,
                    step: n,
                    joint: JointId::from_index(i),
                });
            }
        }
        if let Some(ts) = torques.as_mut() {
            ts.push(applied);
        }
    }

    Ok(PlantRun {
        trace: JointTrace { samples },
        torques,
        velocities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hold(model: &RobotModel, secs: f64) -> ActionSequence {
        ActionSequence {
            targets: vec![model.nominal_pose; (secs / CONTROL_DT).round() as usize],
        }
    }

    #[test]
    fn equilibrium_without_gravity() {
        let model = RobotModel::standin();
        let cfg = PlantConfig {
            gravity: false,
            ..PlantConfig::default()
        };
        let xi = SimParams {
            joint_friction: 0.05,
            joint_damping: 0.04,
            ..SimParams::default()
        };
        let run = simulate(&model, &xi, &hold(&model, 1.0), &cfg, RunOptions::default()).unwrap();
        assert_eq!(run.trace.samples.len(), 200);
        assert!(run.trace.samples.iter().all(|s| *s == model.nominal_pose));
    }

    #[test]
    fn inertia_is_linear_in_mass_scale() {
        let model = RobotModel::standin();
        let cfg = PlantConfig::default();
        let one = effective_inertia(&model, &SimParams::default(), &model.nominal_pose, &cfg);
        let two = effective_inertia(
            &model,
            &SimParams {
                mass_scales: [2.0; 4],
                ..SimParams::default()
            },
            &model.nominal_pose,
            &cfg,
        );
        for i in 0..NUM_JOINTS {
            assert!(one[i] > cfg.rotor_inertia);
            let lhs = two[i] - cfg.rotor_inertia;
            let rhs = 2.0 * (one[i] - cfg.rotor_inertia);
            assert!((lhs - rhs).abs() < 1e-15, "{i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn velocity_solver_satisfies_equation() {
        for &(a, f, c) in &[(10.0, 0.0, 3.0), (10.0, 0.5, 3.0), (10.0, 0.5, -3.0), (10.0, 0.5, 0.001), (4.0, 2.0, 2.0)] {
            let eps = 1e-3;
            let v = solve_velocity(a, f, eps, c);
            let residual = a * v + f * (v / eps).clamp(-1.0, 1.0) - c;
            assert!(residual.abs() < 1e-12, "a={a} f={f} c={c}: {residual}");
        }
    }

    #[test]
    fn delay_indexing() {
        assert_eq!(delayed_index(0.0, 0.015, 10), 0);
        assert_eq!(delayed_index(0.034, 0.015, 10), 0);
        assert_eq!(delayed_index(0.035, 0.015, 10), 1);
        assert_eq!(delayed_index(10.0, 0.0, 10), 9);
    }

    #[test]
    fn csv_round_trip_is_byte_exact() {
        let model = RobotModel::standin();
        let mut seq = hold(&model, 0.2);
        seq.targets[3].0[4] = 0.123456789012345;
        let mut a = Vec::new();
        seq.write_csv(&mut a).unwrap();
        let back = ActionSequence::read_csv(a.as_slice()).unwrap();
        assert_eq!(back, seq);
        let mut b = Vec::new();
        back.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_params() {
        let model = RobotModel::standin();
        let xi = SimParams {
            joint_friction: -1.0,
            ..SimParams::default()
        };
        assert!(simulate_open_loop(&model, &xi, &hold(&model, 0.1)).is_err());
        assert!(matches!(
            simulate_open_loop(&model, &SimParams::default(), &ActionSequence { targets: vec![] }),
            Err(PlantError::EmptyActions)
        ));
    }
}
