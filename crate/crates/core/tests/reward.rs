mod common;

use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use quadbiped_core::reward::{
    EnvState, RewardConfig, RewardEngine, ScaleMode, Shaping, TerminationReason, BREAKDOWN_COLUMNS,
};
use quadbiped_core::{seed, Leg, RobotModel};

fn engine() -> RewardEngine {
    RewardEngine::new(RobotModel::standin(), RewardConfig::default())
}

proptest! {
    #[test]
    fn scale_is_monotone_in_height(z1 in 0.0f64..0.6, z2 in 0.0f64..0.6, s in any::<u64>()) {
        let e = engine();
        let mut rng = seed::rng(s, "prop/height");
        let mut a = common::random_env_state(&e.model, &mut rng, false, 0.42, 0.3);
        a.base.position.z = z1.min(z2);
        let mut b = a.clone();
        b.base.position.z = z1.max(z2);
        prop_assert!(e.dynamic_scale(&a) <= e.dynamic_scale(&b));
        prop_assert!(e.stand_reward(&a).height <= e.stand_reward(&b).height);
    }

    #[test]
    fn scale_is_monotone_in_pitch(p1 in -FRAC_PI_2..FRAC_PI_2, p2 in -FRAC_PI_2..FRAC_PI_2) {
        let e = engine();
        let mut a = EnvState::resting(&e.model, 0.42);
        a.base.orientation = common::pitched(p1.min(p2), 0.0);
        let mut b = a.clone();
        b.base.orientation = common::pitched(p1.max(p2), 0.0);
        prop_assert!(e.dynamic_scale(&a) <= e.dynamic_scale(&b) + 1e-15);
        prop_assert!(e.stand_reward(&a).pitch <= e.stand_reward(&b).pitch + 1e-15);
    }

    #[test]
    fn regularizers_never_reward(s in any::<u64>()) {
        let e = engine();
        let mut rng = seed::rng(s, "prop/reg");
        let st = common::random_env_state(&e.model, &mut rng, false, 0.42, 0.3);
        let r = e.regularization_reward(&st);
        for v in [r.joint_velocity, r.joint_limit, r.torque, r.action_rate, r.gait, r.slip] {
            prop_assert!(v <= 0.0);
        }
        let sit = e.sitdown_reward(&st);
        prop_assert!((0.0..=2.0).contains(&sit));
    }

    #[test]
    fn constant_scale_ignores_posture(s in any::<u64>()) {
        let cfg = RewardConfig { scale_mode: ScaleMode::ConstantOne, ..RewardConfig::default() };
        let e = RewardEngine::new(RobotModel::standin(), cfg);
        let mut rng = seed::rng(s, "prop/const");
        let st = common::random_env_state(&e.model, &mut rng, false, 0.42, 0.3);
        prop_assert_eq!(e.dynamic_scale(&st), 1.0);
    }
}

#[test]
fn breakdown_row_matches_columns() {
    let e = engine();
    let mut rng = seed::rng(1, "row");
    let st = common::random_env_state(&e.model, &mut rng, true, 0.42, 0.3);
    let b = e.total_reward(&st);
    let row = b.row();
    assert_eq!(row.len(), BREAKDOWN_COLUMNS.len());
    let total_col = BREAKDOWN_COLUMNS.iter().position(|c| *c == "total").unwrap();
    assert_eq!(row[total_col], b.total);
}

#[test]
fn rear_leg_contact_is_penalized_but_never_terminates() {
    let e = engine();
    let mut s = EnvState::resting(&e.model, 0.3);
    s.foot_contacts = [false, false, true, true];
    s.rear_leg_collision = true;
    s.step = 500;
    assert_eq!(e.stand_reward(&s).collision, -e.config.collision_weight);
    assert_eq!(e.check_termination(&s).reason, TerminationReason::None);
}

#[test]
fn gait_reference_alternates_rear_feet() {
    let e = engine();
    let half = e.config.gait_period / 2.0;
    for k in 0..20 {
        let t = k as f64 * 0.037;
        let a = e.gait_reference(Leg::RL, t);
        let b = e.gait_reference(Leg::RR, t + half);
        assert!((a - e.gait_reference(Leg::RR, t - half)).abs() < 1e-12);
        assert!((0.0..=e.config.swing_height).contains(&b));
    }
}

#[test]
fn hinge_shaping_is_free_below_the_knee() {
    let cfg = RewardConfig {
        joint_velocity_shaping: Shaping::Hinge,
        torque_shaping: Shaping::Hinge,
        ..RewardConfig::default()
    };
    let e = RewardEngine::new(RobotModel::standin(), cfg);
    let mut s = EnvState::resting(&e.model, 0.3);
    s.qd.0 = [5.0; 12];
    s.torques = [3.0; 12];
    let r = e.regularization_reward(&s);
    assert_eq!(r.joint_velocity, 0.0);
    assert_eq!(r.torque, 0.0);
    s.qd.0[0] = 12.0;
    assert!((e.regularization_reward(&s).joint_velocity + e.config.joint_velocity_weight * 4.0).abs() < 1e-15);
}

#[test]
fn config_file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reward.kv");
    let mut cfg = RewardConfig::default();
    cfg.hand.sigma = 0.123456789;
    cfg.collision_grace_steps = 12;
    std::fs::write(&path, cfg.to_text()).unwrap();
    let back = RewardConfig::from_text(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, cfg);

    let err = RewardConfig::from_text("format = quadbiped-reward/1\nno_such_key = 1\n").unwrap_err();
    assert!(err.to_string().contains("no_such_key"), "{err}");
}
