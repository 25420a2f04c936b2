use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn quadbiped(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadbiped")).args(args).output().expect("binary runs")
}

fn mock_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/assets/instruct/mock").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_lists_formats() {
    let o = quadbiped(&["--version"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
    assert!(text.contains("quadbiped-reward/1") && text.contains("quadbiped-manifest/1"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = quadbiped(&["fly"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let o = quadbiped(&["calibrate", "--dataset", s(&missing), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn mock_instruction_gives_a_track_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("track.csv");
    let o = quadbiped(&["instruct", "--mock", s(&mock_dir("wave_left_hand")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let track = std::fs::read(&out).unwrap();
    assert_eq!(String::from_utf8_lossy(&track).lines().count(), 1 + 6);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("track.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "instruct");
    assert_eq!(manifest["outputs"][0]["sha256"], hex::encode(Sha256::digest(&track)));
    let inputs = manifest["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 3, "instruction plus two replies");
    for i in inputs {
        let bytes = std::fs::read(i["path"].as_str().unwrap()).unwrap();
        assert_eq!(i["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn rule_violation_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = quadbiped(&["instruct", "--mock", s(&mock_dir("tilt_violation")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(0.1, 0.57)"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unreachable_server_exits_with_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_quadbiped"))
        .args(["instruct", "wave", "--timeout", "5", "--out", s(&dir.path().join("t.csv"))])
        .env("QUADBIPED_LLM_ENDPOINT", "http://127.0.0.1:9/v1/chat/completions")
        .env("QUADBIPED_LLM_MODEL", "any")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = quadbiped(&["--seed", "11", "--workers", workers, "gen-curriculum", "--duration", "12", "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv", "1"), run("b.csv", "3"));
}

#[test]
fn calibration_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let ok = |o: Output| assert!(o.status.success(), "{}", stderr(&o));
    ok(quadbiped(&["--seed", "2", "synth-dataset", "--duration", "2", "--out", s(&p("ds"))]));
    assert!(p("ds.manifest.json").exists());
    ok(quadbiped(&["--workers", "1", "calibrate", "--dataset", s(&p("ds")), "--candidates", "16", "--out", s(&p("a.json"))]));
    ok(quadbiped(&["--workers", "2", "calibrate", "--dataset", s(&p("ds")), "--candidates", "16", "--out", s(&p("b.json"))]));
    assert_eq!(std::fs::read(p("a.json")).unwrap(), std::fs::read(p("b.json")).unwrap());
    ok(quadbiped(&[
        "profile", "--dataset", s(&p("ds")), "--report", s(&p("a.json")), "--grid", "0:0.1:0.05", "--out", s(&p("prof.csv")),
    ]));
    assert_eq!(std::fs::read_to_string(p("prof.csv")).unwrap().lines().count(), 4);
    ok(quadbiped(&["randomize", "--report", s(&p("a.json")), "--count", "5", "--out", s(&p("env.jsonl")), "--table-out", s(&p("t.kv"))]));
    assert_eq!(std::fs::read_to_string(p("env.jsonl")).unwrap().lines().count(), 5);
    ok(quadbiped(&["randomize", "--table", s(&p("t.kv")), "--count", "5", "--out", s(&p("env2.jsonl"))]));
    assert_eq!(std::fs::read(p("env.jsonl")).unwrap(), std::fs::read(p("env2.jsonl")).unwrap());

    let o = quadbiped(&["profile", "--dataset", s(&p("ds")), "--param", "stiffness", "--out", s(&p("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn audit_reproduces_training_return() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let o = quadbiped(&[
        "planar-train", "--iterations", "2", "--population", "6", "--elites", "2",
        "--out", s(&p("traj.csv")), "--states", s(&p("states.csv")), "--summary", s(&p("sum.json")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("sum.json")).unwrap()).unwrap();
    let ret = summary[0]["episode_return"].as_f64().unwrap();

    let o = quadbiped(&["reward-audit", "--states", s(&p("states.csv")), "--out", s(&p("audit.csv"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(p("audit.csv")).unwrap();
    let total_col = r.headers().unwrap().iter().position(|h| h == "total").unwrap();
    let sum: f64 = r.records().map(|rec| rec.unwrap()[total_col].parse::<f64>().unwrap()).sum();
    assert!((sum - ret).abs() < 1e-9, "audit {sum} vs training {ret}");
}

#[test]
fn retarget_clip_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let clip: String = (0..31)
        .map(|i| {
            let t = i as f64 / 30.0;
            let reach = 0.3 + 0.1 * (t * 6.0).sin();
            format!(
                "{{\"t\": {t}, \"landmarks\": {{\"left_shoulder\": [0, 0.2, 1.4], \"right_shoulder\": [0, -0.2, 1.4], \
                 \"left_wrist\": [{reach}, 0.25, 1.2], \"right_wrist\": [0.2, -0.25, 1.1], \
                 \"left_hip\": [0, 0.12, 0.9], \"right_hip\": [0, -0.12, 0.9]}}}}\n"
            )
        })
        .collect();
    let input = dir.path().join("clip.jsonl");
    std::fs::write(&input, clip).unwrap();
    let out = dir.path().join("track.csv");
    let o = quadbiped(&["retarget", "--input", s(&input), "--style", "boxing", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 11);
}

#[test]
fn default_configs_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["reward", "randomization", "rules", "robot"] {
        let path = dir.path().join(kind);
        assert!(quadbiped(&["default-config", kind, "--out", s(&path)]).status.success());
    }
    let robot = dir.path().join("robot");
    let o = quadbiped(&[
        "--robot", s(&robot), "reward-audit", "--config", s(&dir.path().join("reward")),
        "--states", s(&dir.path().join("missing.csv")), "--out", s(&dir.path().join("a.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.csv"));
}
