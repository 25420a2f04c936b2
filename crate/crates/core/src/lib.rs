//! Computable core of a hierarchical bipedal-motion stack for a 12-DOF
//! quadruped: reward and termination, motion-target curriculum, real-to-sim
//! calibration of a fixed-base actuator plant, domain randomization, and
//! motion generation from human skeletons and language instructions.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod exec;
pub mod instruct;
pub mod kv;
pub mod motor_plant;
pub mod observation;
pub mod planar;
pub mod randomization;
pub mod retarget;
pub mod reward;
pub mod robot_model;
pub mod seed;
pub mod states;
pub mod target_gen;

pub use exec::Parallelism;
pub use robot_model::{JointId, JointKind, JointVector, Leg, RobotModel};
