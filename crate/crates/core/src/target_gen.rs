//! Motion targets and the training curriculum that generates them.
//!
//! Velocity and heading are resampled on fixed periods and held in between.
//! Front-toe goals are resampled on their own period and the observed target
//! moves linearly from the previous goal to the next one. A new goal is only
//! accepted if the straight segment to it stays inside the reachable
//! workspace, so every interpolated target has a joint witness.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::robot_model::{Leg, RobotModel};
use crate::seed;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionTarget {
    pub v_x: f64,
    pub v_y: f64,
    /// Absolute desired yaw (rad).
    pub heading_des: f64,
    pub yaw_rate_obs: f64,
    /// FL then FR, base frame.
    pub toe_des: [Vector3<f64>; 2],
    /// Joint triples reproducing `toe_des` through FK, when known.
    pub toe_witness: Option<[[f64; 3]; 2]>,
}

impl MotionTarget {
    /// Zero velocity, zero heading, toes at the nominal pose.
    pub fn hold(model: &RobotModel) -> Self {
        let fl = model.nominal_pose.leg(Leg::FL);
        let fr = model.nominal_pose.leg(Leg::FR);
        Self {
            v_x: 0.0,
            v_y: 0.0,
            heading_des: 0.0,
            yaw_rate_obs: 0.0,
            toe_des: [model.toe(Leg::FL, fl), model.toe(Leg::FR, fr)],
            toe_witness: Some([fl, fr]),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("track csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("track csv row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("track csv header must be `{expected}`")]
    Header { expected: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub const TRACK_COLUMNS: [&str; 11] = [
    "t",
    "v_x",
    "v_y",
    "heading_des",
    "yaw_rate_obs",
    "fl_x",
    "fl_y",
    "fl_z",
    "fr_x",
    "fr_y",
    "fr_z",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub t: f64,
    pub target: MotionTarget,
}

/// Time-stamped target sequence shared by curriculum, retargeting and the
/// instruction pipeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetTrack {
    pub rows: Vec<TrackRow>,
}

impl TargetTrack {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TrackError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACK_COLUMNS)?;
        for row in &self.rows {
            let m = &row.target;
            let values = [
                row.t,
                m.v_x,
                m.v_y,
                m.heading_des,
                m.yaw_rate_obs,
                m.toe_des[0].x,
                m.toe_des[0].y,
                m.toe_des[0].z,
                m.toe_des[1].x,
                m.toe_des[1].y,
                m.toe_des[1].z,
            ];
            w.write_record(values.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads a track. Joint witnesses are not part of the file format.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, TrackError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().ne(TRACK_COLUMNS.iter().copied()) {
            return Err(TrackError::Header {
                expected: TRACK_COLUMNS.join(","),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut v = [0.0; 11];
            for (k, field) in rec.iter().enumerate() {
                v[k] = field.trim().parse().map_err(|_| TrackError::Row {
                    row: i + 1,
                    message: format!("column `{}`: `{field}` is not a number", TRACK_COLUMNS[k]),
                })?;
            }
            rows.push(TrackRow {
                t: v[0],
                target: MotionTarget {
                    v_x: v[1],
                    v_y: v[2],
                    heading_des: v[3],
                    yaw_rate_obs: v[4],
                    toe_des: [Vector3::new(v[5], v[6], v[7]), Vector3::new(v[8], v[9], v[10])],
                    toe_witness: None,
                },
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumConfig {
    pub vel_resample_period: f64,
    pub heading_resample_period: f64,
    pub hand_goal_period: f64,
    pub vel_bins: Vec<f64>,
    /// Offset range relative to the current heading (rad).
    pub heading_offset_range: [f64; 2],
    /// Gain from heading error to observed yaw rate (1/s).
    pub yaw_rate_gain: f64,
    pub max_yaw_rate: f64,
    /// Phase offsets (s) of the three resampling clocks.
    pub vel_phase: f64,
    pub heading_phase: f64,
    pub hand_phase: f64,
    /// Points checked along a candidate toe segment before it is accepted.
    pub segment_checks: usize,
    pub max_goal_attempts: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            vel_resample_period: 10.0,
            heading_resample_period: 10.0,
            hand_goal_period: 3.0,
            vel_bins: (-3..=3).map(|k| f64::from(k) / 10.0).collect(),
            heading_offset_range: [-FRAC_PI_2, FRAC_PI_2],
            yaw_rate_gain: 1.0,
            max_yaw_rate: 1.0,
            vel_phase: 0.0,
            heading_phase: 0.0,
            hand_phase: 0.0,
            segment_checks: 64,
            max_goal_attempts: 64,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("clock went backwards: {previous} then {next}")]
    NonMonotonicClock { previous: f64, next: f64 },
    #[error("time {t} is outside the segment [0, {duration}]")]
    OutOfSegment { t: f64, duration: f64 },
    #[error("invalid curriculum config: {0}")]
    Config(String),
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let periods = [
            self.vel_resample_period,
            self.heading_resample_period,
            self.hand_goal_period,
        ];
        if periods.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(CurriculumError::Config("periods must be positive".into()));
        }
        if self.vel_bins.is_empty() {
            return Err(CurriculumError::Config("velocity bins are empty".into()));
        }
        let mut sorted = self.vel_bins.clone();
        sorted.sort_by(f64::total_cmp);
        let symmetric = sorted
            .iter()
            .zip(sorted.iter().rev())
            .all(|(a, b)| (a + b).abs() < 1e-12);
        if !symmetric {
            return Err(CurriculumError::Config("velocity bins must be symmetric about 0".into()));
        }
        let [lo, hi] = self.heading_offset_range;
        if !(lo <= hi) {
            return Err(CurriculumError::Config("heading offset range is empty".into()));
        }
        if !(self.max_yaw_rate > 0.0) {
            return Err(CurriculumError::Config("max yaw rate must be positive".into()));
        }
        Ok(())
    }
}

pub fn sample_velocity<R: rand::Rng + ?Sized>(rng: &mut R, config: &CurriculumConfig) -> f64 {
    config.vel_bins[rng.random_range(0..config.vel_bins.len())]
}

/// `(heading_des, offset)`; the offset is drawn before wrapping.
pub fn sample_heading<R: rand::Rng + ?Sized>(current_heading: f64, rng: &mut R, config: &CurriculumConfig) -> (f64, f64) {
    let [lo, hi] = config.heading_offset_range;
    let offset = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    (wrap_angle(current_heading + offset), offset)
}

pub fn yaw_rate_observation(current_heading: f64, heading_des: f64, config: &CurriculumConfig) -> f64 {
    (config.yaw_rate_gain * wrap_angle(heading_des - current_heading)).clamp(-config.max_yaw_rate, config.max_yaw_rate)
}

/// Linear interpolation of both toe goals at time `t` into a segment of
/// length `duration`.
pub fn interpolate_toe_targets(
    prev_goal: &[Vector3<f64>; 2],
    next_goal: &[Vector3<f64>; 2],
    t: f64,
    duration: f64,
) -> Result<[Vector3<f64>; 2], CurriculumError> {
    if !(0.0..=duration).contains(&t) || !(duration > 0.0) {
        return Err(CurriculumError::OutOfSegment { t, duration });
    }
    let s = t / duration;
    Ok([lerp(&prev_goal[0], &next_goal[0], s), lerp(&prev_goal[1], &next_goal[1], s)])
}

fn lerp(a: &Vector3<f64>, b: &Vector3<f64>, s: f64) -> Vector3<f64> {
    if s == 0.0 {
        *a
    } else if s == 1.0 {
        *b
    } else {
        a + (b - a) * s
    }
}

fn lerp3(a: &[f64; 3], b: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s, a[2] + (b[2] - a[2]) * s]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurriculumEventKind {
    Velocity { v_x: f64 },
    Heading { offset: f64, heading_des: f64 },
    ToeGoal { prev: [Vector3<f64>; 2], next: [Vector3<f64>; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumEvent {
    pub t: f64,
    pub kind: CurriculumEventKind,
}

#[derive(Debug, Clone, Copy)]
struct ToeSegment {
    epoch: i64,
    prev: [Vector3<f64>; 2],
    prev_angles: [[f64; 3]; 2],
    next: [Vector3<f64>; 2],
    next_angles: [[f64; 3]; 2],
}

/// One environment's target generator.
#[derive(Debug, Clone)]
pub struct Curriculum {
    config: CurriculumConfig,
    model: RobotModel,
    vel_rng: seed::Rng,
    heading_rng: seed::Rng,
    toe_rng: seed::Rng,
    last_t: Option<f64>,
    vel_epoch: Option<i64>,
    heading_epoch: Option<i64>,
    v_x: f64,
    heading_des: f64,
    segment: Option<ToeSegment>,
    last_witness: Option<[[f64; 3]; 2]>,
    events: Vec<CurriculumEvent>,
}

const EPOCH_EPS: f64 = 1e-9;

fn epoch(t: f64, phase: f64, period: f64) -> i64 {
    ((t - phase) / period + EPOCH_EPS).floor() as i64
}

impl Curriculum {
    pub fn new(model: RobotModel, config: CurriculumConfig, seed: u64) -> Result<Self, CurriculumError> {
        config.validate()?;
        Ok(Self {
            config,
            model,
            vel_rng: seed::rng(seed, "curriculum/velocity"),
            heading_rng: seed::rng(seed, "curriculum/heading"),
            toe_rng: seed::rng(seed, "curriculum/toe"),
            last_t: None,
            vel_epoch: None,
            heading_epoch: None,
            v_x: 0.0,
            heading_des: 0.0,
            segment: None,
            last_witness: None,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &CurriculumConfig {
        &self.config
    }

    /// Every resampling event so far, in clock order.
    pub fn events(&self) -> &[CurriculumEvent] {
        &self.events
    }

    /// Target at clock `t` given the robot's current heading.
    pub fn step(&mut self, t: f64, current_heading: f64) -> Result<MotionTarget, CurriculumError> {
        if let Some(prev) = self.last_t {
            if t < prev {
                return Err(CurriculumError::NonMonotonicClock { previous: prev, next: t });
            }
        }
        self.last_t = Some(t);
        let cfg = &self.config;

        let ve = epoch(t, cfg.vel_phase, cfg.vel_resample_period);
        if self.vel_epoch != Some(ve) {
            self.vel_epoch = Some(ve);
            self.v_x = sample_velocity(&mut self.vel_rng, cfg);
            self.events.push(CurriculumEvent {
                t,
                kind: CurriculumEventKind::Velocity { v_x: self.v_x },
            });
        }

        let he = epoch(t, cfg.heading_phase, cfg.heading_resample_period);
        if self.heading_epoch != Some(he) {
            self.heading_epoch = Some(he);
            let (heading_des, offset) = sample_heading(current_heading, &mut self.heading_rng, cfg);
            self.heading_des = heading_des;
            self.events.push(CurriculumEvent {
                t,
                kind: CurriculumEventKind::Heading { offset, heading_des },
            });
        }

        let te = epoch(t, cfg.hand_phase, cfg.hand_goal_period);
        if self.segment.map(|s| s.epoch) != Some(te) {
            self.start_segment(t, te);
        }
        let seg = self.segment.expect("segment started");
        let seg_start = self.config.hand_phase + te as f64 * self.config.hand_goal_period;
        let local = (t - seg_start).clamp(0.0, self.config.hand_goal_period);
        let toe_des = interpolate_toe_targets(&seg.prev, &seg.next, local, self.config.hand_goal_period)?;
        let s = local / self.config.hand_goal_period;

        let mut witness = [[0.0; 3]; 2];
        let mut have_witness = true;
        for (k, leg) in Leg::FRONT.into_iter().enumerate() {
            let start = self
                .last_witness
                .map_or_else(|| lerp3(&seg.prev_angles[k], &seg.next_angles[k], s), |w| w[k]);
            match self.model.witness_near(leg, toe_des[k], start) {
                Some(q) => witness[k] = q,
                None => have_witness = false,
            }
        }
        let toe_witness = have_witness.then_some(witness);
        self.last_witness = toe_witness;

        Ok(MotionTarget {
            v_x: self.v_x,
            v_y: 0.0,
            heading_des: self.heading_des,
            yaw_rate_obs: yaw_rate_observation(current_heading, self.heading_des, &self.config),
            toe_des,
            toe_witness,
        })
    }

    fn start_segment(&mut self, t: f64, te: i64) {
        let (prev, prev_angles) = match self.segment {
            Some(seg) => (seg.next, seg.next_angles),
            None => {
                let mut p = [Vector3::zeros(); 2];
                let mut a = [[0.0; 3]; 2];
                for (k, leg) in Leg::FRONT.into_iter().enumerate() {
                    let g = self.model.sample_reachable_toe_goal(leg, &mut self.toe_rng);
                    p[k] = g.vector();
                    a[k] = g.angles;
                }
                (p, a)
            }
        };
        let mut next = prev;
        let mut next_angles = prev_angles;
        for (k, leg) in Leg::FRONT.into_iter().enumerate() {
            for _ in 0..self.config.max_goal_attempts {
                let g = self.model.sample_reachable_toe_goal(leg, &mut self.toe_rng);
                if self.segment_reachable(leg, &prev[k], &prev_angles[k], &g.vector()) {
                    next[k] = g.vector();
                    next_angles[k] = g.angles;
                    break;
                }
            }
        }
        self.segment = Some(ToeSegment {
            epoch: te,
            prev,
            prev_angles,
            next,
            next_angles,
        });
        self.last_witness = None;
        self.events.push(CurriculumEvent {
            t,
            kind: CurriculumEventKind::ToeGoal { prev, next },
        });
    }

    fn segment_reachable(&self, leg: Leg, a: &Vector3<f64>, a_angles: &[f64; 3], b: &Vector3<f64>) -> bool {
        let n = self.config.segment_checks.max(1);
        let mut q = *a_angles;
        for j in 1..=n {
            let p = lerp(a, b, j as f64 / n as f64);
            match self.model.witness_near(leg, p, q) {
                Some(w) => q = w,
                None => return false,
            }
        }
        true
    }
}

/// Runs a curriculum on a fixed clock `t_k = k * dt` for `steps` steps with a
/// heading that follows the commanded yaw rate.
pub fn generate_track(
    model: &RobotModel,
    config: &CurriculumConfig,
    seed: u64,
    dt: f64,
    steps: usize,
) -> Result<(TargetTrack, Vec<CurriculumEvent>), CurriculumError> {
    let mut cur = Curriculum::new(model.clone(), config.clone(), seed)?;
    let mut heading = 0.0;
    let mut rows = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let target = cur.step(t, heading)?;
        heading = wrap_angle(heading + target.yaw_rate_obs * dt);
        rows.push(TrackRow { t, target });
    }
    Ok((TargetTrack { rows }, cur.events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn wrapping_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(PI - 0.1 + 0.3) - (-PI + 0.2)).abs() < 1e-12);
        assert!((wrap_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn yaw_rate_sign_and_clamp() {
        let mut cfg = CurriculumConfig::default();
        assert_eq!(yaw_rate_observation(0.3, 0.3, &cfg), 0.0);
        // Desired heading to the left (counter-clockwise about +z).
        assert!(yaw_rate_observation(0.0, 0.2, &cfg) > 0.0);
        assert_eq!(yaw_rate_observation(0.0, FRAC_PI_2, &cfg), 1.0);
        cfg.max_yaw_rate = 10.0;
        assert_eq!(yaw_rate_observation(0.0, FRAC_PI_2, &cfg), FRAC_PI_2);
    }

    #[test]
    fn interpolation_endpoints() {
        let a = [Vector3::new(0.1, 0.2, -0.1), Vector3::new(0.0, -0.1, -0.2)];
        let b = [Vector3::new(0.3, 0.1, -0.2), Vector3::new(0.2, -0.2, 0.0)];
        assert_eq!(interpolate_toe_targets(&a, &b, 0.0, 3.0).unwrap(), a);
        assert_eq!(interpolate_toe_targets(&a, &b, 3.0, 3.0).unwrap(), b);
        let mid = interpolate_toe_targets(&a, &b, 1.5, 3.0).unwrap();
        assert!((mid[0] - (a[0] + b[0]) / 2.0).norm() < 1e-15);
        assert!(interpolate_toe_targets(&a, &b, 3.1, 3.0).is_err());
        assert!(interpolate_toe_targets(&a, &b, -0.1, 3.0).is_err());
    }

    #[test]
    fn velocity_bins_exact() {
        let cfg = CurriculumConfig::default();
        assert_eq!(cfg.vel_bins, vec![-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3]);
        let mut rng = seed::rng(3, "v");
        for _ in 0..100 {
            assert!(cfg.vel_bins.contains(&sample_velocity(&mut rng, &cfg)));
        }
    }

    #[test]
    fn clock_must_not_go_back() {
        let mut c = Curriculum::new(RobotModel::standin(), CurriculumConfig::default(), 1).unwrap();
        c.step(1.0, 0.0).unwrap();
        assert!(c.step(0.5, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let model = RobotModel::standin();
        let (track, _) = generate_track(&model, &CurriculumConfig::default(), 5, 0.02, 20).unwrap();
        let text = track.to_csv_string();
        let back = TargetTrack::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.to_csv_string(), text);
        assert_eq!(back.rows.len(), 20);
        assert_eq!(back.rows[3].target.toe_des, track.rows[3].target.toe_des);
    }
}
