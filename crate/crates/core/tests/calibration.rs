use quadbiped_core::calibration::{
    discrepancy, error_profile, parse_grid, probe_sequence, profile_csv, sweep, synthesize_dataset, CalibrationDataset,
    CalibrationReport, Param, ParamBox, ProbeConfig, SweepConfig,
};
use quadbiped_core::motor_plant::{PlantConfig, SimParams};
use quadbiped_core::{Parallelism, RobotModel};

fn dataset(seconds: f64) -> (RobotModel, SimParams, CalibrationDataset) {
    let model = RobotModel::standin();
    let truth = SimParams {
        joint_friction: 0.04,
        joint_damping: 0.03,
        delay: 0.01,
        ..SimParams::default()
    };
    let probe = ProbeConfig {
        duration: seconds,
        ..ProbeConfig::default()
    };
    let actions = probe_sequence(&model, &probe, 7);
    let ds = synthesize_dataset(&model, &truth, actions, &PlantConfig::default(), 0.002, 8).unwrap();
    (model, truth, ds)
}

#[test]
fn dataset_directory_round_trip() {
    let (_, _, ds) = dataset(1.0);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = CalibrationDataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn loading_a_mismatched_dataset_fails() {
    let (model, _, ds) = dataset(1.0);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    // A trace of a different length than the actions imply.
    let short = synthesize_dataset(&model, &SimParams::default(), probe_sequence(&model, &ProbeConfig { duration: 0.5, ..ProbeConfig::default() }, 1), &PlantConfig::default(), 0.0, 1).unwrap();
    short.q_real.write_csv(std::fs::File::create(dir.path().join("q_real.csv")).unwrap()).unwrap();
    assert!(CalibrationDataset::load(dir.path()).is_err());
}

#[test]
fn sweep_is_independent_of_parallelism() {
    let (model, _, ds) = dataset(2.0);
    let cfg = |parallelism| SweepConfig {
        candidates: 32,
        seed: 5,
        parallelism,
        ..SweepConfig::default()
    };
    let a = sweep(&model, &ds, &cfg(Parallelism::Sequential)).unwrap();
    let b = sweep(&model, &ds, &cfg(Parallelism::Workers(3))).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.top_k.len(), 16);
    assert!(a.top_k.windows(2).all(|w| w[0].error <= w[1].error));
    assert_eq!(a.best, a.top_k[0].params);
}

#[test]
fn report_json_round_trip_through_a_file() {
    let (model, _, ds) = dataset(1.0);
    let rep = sweep(
        &model,
        &ds,
        &SweepConfig {
            candidates: 8,
            ..SweepConfig::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    std::fs::write(&path, rep.to_json()).unwrap();
    assert_eq!(CalibrationReport::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap(), rep);
}

#[test]
fn friction_profile_bottoms_out_near_truth() {
    let (model, truth, ds) = dataset(6.0);
    let grid = parse_grid("0:0.1:0.01").unwrap();
    let rows = error_profile(&model, &ds, Param::JointFriction, &grid, &truth, &PlantConfig::default(), Parallelism::default()).unwrap();
    let best = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!((best.0 - truth.joint_friction).abs() <= 0.01 + 1e-12, "argmin {}", best.0);
    let csv = profile_csv(Param::JointFriction, &rows);
    assert!(csv.starts_with("joint_friction,error\n"));
    assert_eq!(csv.lines().count(), grid.len() + 1);
}

#[test]
fn unsorted_grid_is_rejected() {
    let (model, truth, ds) = dataset(0.5);
    assert!(error_profile(&model, &ds, Param::Delay, &[0.02, 0.01], &truth, &PlantConfig::default(), Parallelism::Sequential).is_err());
}

#[test]
fn truth_scores_no_worse_than_box_corners() {
    let (model, truth, ds) = dataset(3.0);
    let plant = PlantConfig::default();
    let at_truth = discrepancy(&model, &truth, &ds, &plant).unwrap();
    let bx = ParamBox::default();
    for p in [Param::JointFriction, Param::JointDamping, Param::Delay] {
        for v in bx.range(p) {
            let mut xi = truth;
            p.set(&mut xi, v);
            assert!(discrepancy(&model, &xi, &ds, &plant).unwrap() > at_truth, "{p} = {v}");
        }
    }
}
