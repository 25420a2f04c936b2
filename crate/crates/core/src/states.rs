//! Flat CSV rows of [`EnvState`], the input of reward audits.
//!
//! One row per state. Booleans are `0`/`1`. The orientation quaternion must
//! be unit within 1e-9; it is stored as written so rows round-trip exactly.
//! Toe witnesses are not stored.

use std::io::{Read, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::reward::EnvState;
use crate::robot_model::{BasePose, JointId, JointVector, Leg, NUM_JOINTS, NUM_LEGS};
use crate::target_gen::MotionTarget;

#[derive(Debug, Error)]
pub enum StatesError {
    #[error("states csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("states csv header: expected column {index} to be `{expected}`, found `{found}`")]
    Header { index: usize, expected: String, found: String },
    #[error("states csv row {row}: {message}")]
    Row { row: usize, message: String },
}

fn joints(prefix: &'static str) -> impl Iterator<Item = String> {
    (0..NUM_JOINTS).map(move |i| format!("{prefix}{}", JointId::from_index(i)))
}

/// Column names in file order.
pub fn state_columns() -> Vec<String> {
    let mut c: Vec<String> = ["step", "base_x", "base_y", "base_z", "quat_w", "quat_x", "quat_y", "quat_z"]
        .map(String::from)
        .to_vec();
    c.extend(["lin_vel_x", "lin_vel_y", "lin_vel_z", "ang_vel_x", "ang_vel_y", "ang_vel_z", "heading"].map(String::from));
    c.extend(joints("q/"));
    c.extend(joints("qd/"));
    c.extend(joints("torque/"));
    c.extend(Leg::ALL.map(|l| format!("contact/{l}")));
    c.extend(Leg::ALL.map(|l| format!("foot_height/{l}")));
    for l in Leg::ALL {
        c.extend(["x", "y", "z"].map(|a| format!("foot_vel/{l}/{a}")));
    }
    c.extend(["non_foot_collision", "rear_leg_collision"].map(String::from));
    c.extend(joints("action/"));
    c.extend(joints("prev_action/"));
    c.extend(["target_v_x", "target_v_y", "target_heading", "target_yaw_rate"].map(String::from));
    for side in ["fl", "fr"] {
        c.extend(["x", "y", "z"].map(|a| format!("target_toe_{side}/{a}")));
    }
    c
}

fn encode(s: &EnvState) -> Vec<f64> {
    let mut v = vec![s.step as f64];
    v.extend(s.base.position.iter());
    let q = s.base.orientation.quaternion();
    v.extend([q.w, q.i, q.j, q.k]);
    v.extend(s.base_lin_vel.iter());
    v.extend(s.base_ang_vel.iter());
    v.push(s.heading);
    v.extend(s.q.iter());
    v.extend(s.qd.iter());
    v.extend(s.torques);
    v.extend(s.foot_contacts.map(f64::from));
    v.extend(s.foot_heights);
    for fv in &s.foot_velocities {
        v.extend(fv.iter());
    }
    v.push(f64::from(s.non_foot_collision));
    v.push(f64::from(s.rear_leg_collision));
    v.extend(s.action.iter());
    v.extend(s.prev_action.iter());
    let t = &s.target;
    v.extend([t.v_x, t.v_y, t.heading_des, t.yaw_rate_obs]);
    for toe in &t.toe_des {
        v.extend(toe.iter());
    }
    v
}

pub fn write_states_csv<W: Write>(states: &[EnvState], out: W) -> Result<(), StatesError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(state_columns())?;
    for s in states {
        w.write_record(encode(s).iter().map(|x| x.to_string()))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

struct Cursor<'a> {
    values: &'a [f64],
    at: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> f64 {
        self.at += 1;
        self.values[self.at - 1]
    }

    fn array<const N: usize>(&mut self) -> [f64; N] {
        std::array::from_fn(|_| self.next())
    }

    fn vec3(&mut self) -> Vector3<f64> {
        Vector3::from(self.array::<3>())
    }

    fn flag(&mut self) -> Result<bool, String> {
        match self.next() {
            0.0 => Ok(false),
            1.0 => Ok(true),
            x => Err(format!("column {}: flag must be 0 or 1, got {x}", self.at - 1)),
        }
    }
}

fn decode(values: &[f64]) -> Result<EnvState, String> {
    let mut c = Cursor { values, at: 0 };
    let step = c.next();
    if !(step >= 0.0 && step.fract() == 0.0) {
        return Err(format!("step must be a non-negative integer, got {step}"));
    }
    let position = c.vec3();
    let [w, i, j, k] = c.array::<4>();
    let quat = Quaternion::new(w, i, j, k);
    if (quat.norm() - 1.0).abs() > 1e-9 {
        return Err(format!("orientation quaternion has norm {}, expected 1", quat.norm()));
    }
    let base_lin_vel = c.vec3();
    let base_ang_vel = c.vec3();
    let heading = c.next();
    let q = JointVector(c.array());
    let qd = JointVector(c.array());
    let torques = c.array();
    let mut foot_contacts = [false; NUM_LEGS];
    for f in &mut foot_contacts {
        *f = c.flag()?;
    }
    let foot_heights = c.array();
    let foot_velocities = [c.vec3(), c.vec3(), c.vec3(), c.vec3()];
    let non_foot_collision = c.flag()?;
    let rear_leg_collision = c.flag()?;
    let action = JointVector(c.array());
    let prev_action = JointVector(c.array());
    let [v_x, v_y, heading_des, yaw_rate_obs] = c.array();
    let toe_des = [c.vec3(), c.vec3()];
    Ok(EnvState {
        base: BasePose {
            position,
            orientation: UnitQuaternion::new_unchecked(quat),
        },
        base_lin_vel,
        base_ang_vel,
        heading,
        q,
        qd,
        torques,
        foot_contacts,
        foot_heights,
        foot_velocities,
        non_foot_collision,
        rear_leg_collision,
        action,
        prev_action,
        step: step as u64,
        target: MotionTarget {
            v_x,
            v_y,
            heading_des,
            yaw_rate_obs,
            toe_des,
            toe_witness: None,
        },
    })
}

pub fn read_states_csv<R: Read>(input: R) -> Result<Vec<EnvState>, StatesError> {
    let mut r = csv::Reader::from_reader(input);
    let columns = state_columns();
    let header = r.headers()?.clone();
    for (index, expected) in columns.iter().enumerate() {
        let found = header.get(index).unwrap_or("");
        if found != expected {
            return Err(StatesError::Header {
                index,
                expected: expected.clone(),
                found: found.to_string(),
            });
        }
    }
    if header.len() != columns.len() {
        return Err(StatesError::Header {
            index: columns.len(),
            expected: "end of header".into(),
            found: header.get(columns.len()).unwrap_or("").to_string(),
        });
    }
    let mut out = Vec::new();
    for (k, record) in r.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let values = record
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| StatesError::Row {
                        row,
                        message: format!("column `{}`: `{f}` is not a finite number", columns[i]),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(decode(&values).map_err(|message| StatesError::Row { row, message })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot_model::RobotModel;

    #[test]
    fn column_count_matches_encoding() {
        let s = EnvState::resting(&RobotModel::standin(), 0.2);
        assert_eq!(encode(&s).len(), state_columns().len());
    }
}
