mod common;

use quadbiped_core::retarget::{build_track, parse_jsonl, to_jsonl, RetargetConfig, RetargetError, SkeletonFrame};
use quadbiped_core::target_gen::TargetTrack;
use quadbiped_core::{seed, Parallelism, RobotModel};

fn clip(n: usize, fps: f64, s: u64) -> Vec<SkeletonFrame> {
    let mut rng = seed::rng(s, "retarget/clip");
    (0..n).map(|i| common::random_skeleton(&mut rng, 10.0 + i as f64 / fps)).collect()
}

#[test]
fn jsonl_round_trip() {
    let frames = clip(12, 30.0, 1);
    let text = to_jsonl(&frames);
    assert_eq!(text.lines().count(), 12);
    assert_eq!(parse_jsonl(&text).unwrap(), frames);
    // Blank lines are ignored.
    assert_eq!(parse_jsonl(&format!("\n{text}\n\n")).unwrap(), frames);
}

#[test]
fn bad_json_names_its_line() {
    let mut text = to_jsonl(&clip(3, 30.0, 2));
    text.push_str("{\"t\": 1.0, \"landmarks\": \n");
    match parse_jsonl(&text) {
        Err(RetargetError::Json { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected json error, got {other:?}"),
    }
}

#[test]
fn ballet_rows_are_half_a_second_apart() {
    let frames = clip(61, 30.0, 3);
    let out = build_track(&frames, &RetargetConfig::ballet(), &RobotModel::standin(), Parallelism::default()).unwrap();
    let ts: Vec<f64> = out.track.rows.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
}

#[test]
fn track_is_independent_of_parallelism() {
    let model = RobotModel::standin();
    let frames = clip(45, 30.0, 4);
    let a = build_track(&frames, &RetargetConfig::boxing(), &model, Parallelism::Sequential).unwrap();
    let b = build_track(&frames, &RetargetConfig::boxing(), &model, Parallelism::Workers(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn track_survives_csv() {
    let out = build_track(&clip(31, 30.0, 5), &RetargetConfig::boxing(), &RobotModel::standin(), Parallelism::Sequential).unwrap();
    let mut buf = Vec::new();
    out.track.write_csv(&mut buf).unwrap();
    let back = TargetTrack::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.rows.len(), out.track.rows.len());
    for (a, b) in back.rows.iter().zip(&out.track.rows) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.target.toe_des, b.target.toe_des);
    }
}

#[test]
fn fixed_scale_is_used_verbatim() {
    let cfg = RetargetConfig {
        scale: Some(0.3),
        ..RetargetConfig::boxing()
    };
    let out = build_track(&clip(4, 30.0, 6), &cfg, &RobotModel::standin(), Parallelism::Sequential).unwrap();
    assert_eq!(out.scale, 0.3);
    let bad = RetargetConfig {
        scale: Some(-1.0),
        ..cfg
    };
    assert!(matches!(bad.validate(), Err(RetargetError::Config(_))));
}

#[test]
fn malformed_clips_are_rejected() {
    let model = RobotModel::standin();
    let cfg = RetargetConfig::boxing();
    let par = Parallelism::Sequential;
    let mut frames = clip(5, 30.0, 7);
    assert!(matches!(build_track(&frames[..1], &cfg, &model, par), Err(RetargetError::TooShort(1))));

    let mut swapped = frames.clone();
    swapped[3].t = swapped[2].t;
    assert!(matches!(
        build_track(&swapped, &cfg, &model, par),
        Err(RetargetError::NonMonotonicTime { frame: 3, .. })
    ));

    frames[2].landmarks.remove("right_wrist");
    match build_track(&frames, &cfg, &model, par) {
        Err(RetargetError::MissingLandmark { frame, name }) => {
            assert_eq!(frame, 2);
            assert_eq!(name, "right_wrist");
        }
        other => panic!("expected missing landmark, got {other:?}"),
    }
}

#[test]
fn collapsed_shoulders_are_degenerate() {
    let mut frames = clip(3, 30.0, 8);
    let l = frames[1].landmarks["left_shoulder"];
    frames[1].landmarks.insert("right_shoulder".into(), l);
    assert!(matches!(
        build_track(&frames, &RetargetConfig::boxing(), &RobotModel::standin(), Parallelism::Sequential),
        Err(RetargetError::DegenerateFrame { frame: 1, .. })
    ));
}
