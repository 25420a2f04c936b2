mod common;

use quadbiped_core::reward::{RewardConfig, RewardEngine};
use quadbiped_core::states::{read_states_csv, state_columns, write_states_csv, StatesError};
use quadbiped_core::{seed, RobotModel};

fn sample(n: usize) -> Vec<quadbiped_core::reward::EnvState> {
    let model = RobotModel::standin();
    let mut rng = seed::rng(6, "states");
    (0..n)
        .map(|i| {
            let mut s = common::random_env_state(&model, &mut rng, i % 2 == 0, 0.42, 0.35);
            s.target.toe_witness = None;
            s
        })
        .collect()
}

#[test]
fn states_round_trip_exactly() {
    let states = sample(50);
    let mut buf = Vec::new();
    write_states_csv(&states, &mut buf).unwrap();
    assert_eq!(read_states_csv(buf.as_slice()).unwrap(), states);
}

#[test]
fn rewards_survive_the_file() {
    let engine = RewardEngine::new(RobotModel::standin(), RewardConfig::default());
    let states = sample(20);
    let mut buf = Vec::new();
    write_states_csv(&states, &mut buf).unwrap();
    for (a, b) in states.iter().zip(read_states_csv(buf.as_slice()).unwrap()) {
        assert_eq!(engine.total_reward(a), engine.total_reward(&b));
    }
}

#[test]
fn malformed_rows_are_located() {
    let mut buf = Vec::new();
    write_states_csv(&sample(3), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();

    let mut bad_flag = lines.clone();
    let cols = state_columns();
    let at = cols.iter().position(|c| c == "non_foot_collision").unwrap();
    let mut fields: Vec<&str> = bad_flag[2].split(',').collect();
    fields[at] = "0.5";
    bad_flag[2] = fields.join(",");
    match read_states_csv(bad_flag.join("\n").as_bytes()) {
        Err(StatesError::Row { row, .. }) => assert_eq!(row, 2),
        other => panic!("expected row error, got {other:?}"),
    }

    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    fields[4] = "2".into();
    lines[1] = fields.join(",");
    let err = read_states_csv(lines.join("\n").as_bytes()).unwrap_err();
    assert!(err.to_string().contains("quaternion"), "{err}");

    let header = text.replacen("base_x", "base_X", 1);
    assert!(matches!(read_states_csv(header.as_bytes()), Err(StatesError::Header { index: 1, .. })));
}
