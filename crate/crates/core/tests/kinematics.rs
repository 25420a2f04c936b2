mod common;

use nalgebra::Vector3;
use proptest::prelude::*;
use quadbiped_core::robot_model::REACH_TOLERANCE;
use quadbiped_core::{seed, Leg, RobotModel};

fn leg_strategy() -> impl Strategy<Value = Leg> {
    prop_oneof![Just(Leg::FL), Just(Leg::FR), Just(Leg::RL), Just(Leg::RR)]
}

fn angles_in_limits(leg: Leg) -> impl Strategy<Value = [f64; 3]> {
    let model = RobotModel::standin();
    let l = model.leg(leg).limits;
    (l[0].min..=l[0].max, l[1].min..=l[1].max, l[2].min..=l[2].max).prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #[test]
    fn fk_agrees_with_transform_chain((leg, q) in leg_strategy().prop_flat_map(|leg| (Just(leg), angles_in_limits(leg)))) {
        let model = RobotModel::standin();
        let p = model.toe(leg, q);
        let o = common::fk_homogeneous(&model, leg, q);
        prop_assert!(common::dist([p.x, p.y, p.z], o) < 1e-12);
        let qp = model.toe_via_quaternions(leg, q);
        prop_assert!((qp - p).norm() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences((leg, q) in leg_strategy().prop_flat_map(|leg| (Just(leg), angles_in_limits(leg)))) {
        let model = RobotModel::standin();
        let jac = model.toe_jacobian(leg, q);
        let h = 1e-6;
        for k in 0..3 {
            let (mut qp, mut qm) = (q, q);
            qp[k] += h;
            qm[k] -= h;
            let a = common::fk_homogeneous(&model, leg, qp);
            let b = common::fk_homogeneous(&model, leg, qm);
            for i in 0..3 {
                let fd = (a[i] - b[i]) / (2.0 * h);
                prop_assert!((jac[(i, k)] - fd).abs() < 1e-7, "d{i}/dq{k}: {} vs {fd}", jac[(i, k)]);
            }
        }
    }

    #[test]
    fn toes_stay_inside_workspace_sphere((leg, q) in leg_strategy().prop_flat_map(|leg| (Just(leg), angles_in_limits(leg)))) {
        let model = RobotModel::standin();
        prop_assert!(model.toe(leg, q).norm() <= model.workspace_radius(leg) + 1e-12);
    }

    #[test]
    fn inverse_kinematics_recovers_the_angles((leg, q) in leg_strategy().prop_flat_map(|leg| (Just(leg), angles_in_limits(leg)))) {
        let model = RobotModel::standin();
        let sols = model.inverse_kinematics(leg, model.toe(leg, q));
        prop_assert!(!sols.is_empty() && sols.len() <= 4);
        let closest = sols
            .iter()
            .map(|s| (0..3).map(|i| (s[i] - q[i]).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(closest < 1e-7, "closest solution {closest} rad away");
    }

    #[test]
    fn sampled_goals_are_reachable(s in any::<u64>()) {
        let model = RobotModel::standin();
        let mut rng = seed::rng(s, "prop/goal");
        for leg in Leg::FRONT {
            let g = model.sample_reachable_toe_goal(leg, &mut rng);
            prop_assert!(model.leg_within_limits(leg, g.angles));
            prop_assert!(model.is_reachable(leg, g.vector()));
            prop_assert_eq!(model.nearest_reachable(leg, g.vector()).position, g.position);
        }
    }
}

#[test]
fn non_finite_angles_are_rejected() {
    let model = RobotModel::standin();
    assert!(model.forward_kinematics_toe(Leg::FL, [0.0, f64::NAN, -1.0]).is_err());
}

#[test]
fn left_and_right_legs_are_mirror_images() {
    let model = RobotModel::standin();
    let mut rng = seed::rng(4, "mirror");
    for _ in 0..100 {
        let q = common::random_in_limits(&model, Leg::FL, &mut rng);
        let l = model.toe(Leg::FL, q);
        let r = model.toe(Leg::FR, [-q[0], q[1], q[2]]);
        assert!((l - Vector3::new(r.x, -r.y, r.z)).norm() < 1e-12);
    }
}

#[test]
fn standin_description_parses_to_the_builtin_model() {
    let parsed = RobotModel::from_description(RobotModel::standin_description()).unwrap();
    assert_eq!(parsed, RobotModel::standin());
}

#[test]
fn projection_beats_dense_sampling() {
    let model = RobotModel::standin();
    let mut rng = seed::rng(11, "projection/oracle");
    for leg in Leg::FRONT {
        let cloud: Vec<[f64; 3]> = (0..10_000)
            .map(|_| common::fk_homogeneous(&model, leg, common::random_in_limits(&model, leg, &mut rng)))
            .collect();
        for _ in 0..100 {
            let p = [
                rand::Rng::random_range(&mut rng, -0.2..0.7),
                rand::Rng::random_range(&mut rng, -0.5..0.5),
                rand::Rng::random_range(&mut rng, -0.45..0.35),
            ];
            let nearest = cloud.iter().map(|c| common::dist(*c, p)).fold(f64::INFINITY, f64::min);
            let proj = model.nearest_reachable(leg, Vector3::from(p));
            let d = common::dist(proj.position, p);
            assert!(d <= nearest + 1e-9, "{leg}: projection {d} worse than sample {nearest}");
            assert!(model.leg_within_limits(leg, proj.angles));
            let fk = common::fk_homogeneous(&model, leg, proj.angles);
            assert!(common::dist(fk, proj.position) <= REACH_TOLERANCE);
        }
    }
}
