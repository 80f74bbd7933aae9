use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_passive-nets"))
        .args(args)
        .env("PASSIVE_NETS_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_aff2_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", arg(&scenario("aff2.json")), "--out", arg(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("trajectory.csv").exists());
    let doc = read_json(&dir.path().join("verify.json"));
    assert_eq!(doc["verify"]["passed"], Value::Bool(true));
    assert_eq!(doc["mode"], "ofp1");
    let beta = doc["steady_state"]["beta"].as_f64().unwrap();
    assert!((beta - 2.0).abs() < 1e-6, "{beta}");
    assert!(doc["meta"]["versions"]["passive_nets"].is_string());
}

#[test]
fn simulate_and_solve_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", arg(&scenario("traf2.json")), "--out", arg(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = read_json(&dir.path().join("steady_state.json"));
    assert_eq!(doc["settled"], Value::Bool(true));
    let header = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(header.starts_with("t,"), "{}", &header[..40]);

    let out = run(&["solve", arg(&scenario("traf2.json")), "--out", arg(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sol = read_json(&dir.path().join("solution.json"));
    let y: Vec<f64> = sol["solution"]["y"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((y[0] - 10.0).abs() < 1e-6 && (y[1] - 40.0).abs() < 1e-6, "{y:?}");
}

#[test]
fn mode_flag_overrides_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve",
        arg(&scenario("aff2.json")),
        "--mode",
        "gofp",
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_json(&dir.path().join("solution.json"))["solution"]["mode"], "gofp");
}

#[test]
fn opp2_quadratic_solves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", arg(&scenario("opp2_quadratic.json")), "--out", arg(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sol = &read_json(&dir.path().join("solution.json"))["solution"];
    let eta = sol["eta"][0].as_f64().unwrap();
    assert!((eta + 1.0).abs() < 1e-10, "{eta}");
}

#[test]
fn schema_error_exits_1_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("aff2.json"))
        .unwrap()
        .replacen("\"affine\"", "\"pendulum\"", 1);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, text).unwrap();
    let out = run(&["solve", arg(&path), "--out", arg(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nodes[0]"), "{}", stderr(&out));
}

#[test]
fn missing_file_exits_1() {
    let out = run(&["solve", "/nonexistent/scenario.json"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn short_horizon_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("traf2.json"))
        .unwrap()
        .replace("\"horizon\": 50.0", "\"horizon\": 0.5");
    let path = dir.path().join("short.json");
    std::fs::write(&path, text).unwrap();
    let out = run(&["simulate", arg(&path), "--out", arg(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    // the trajectory is still written
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn saturating_opp2_exits_3_and_names_edge_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", arg(&scenario("opp2_lncosh.json")), "--out", arg(dir.path())]);
    assert_eq!(code(&out), 3);
    let err = stderr(&out);
    assert!(err.contains("edge(s) [1]") && err.contains("saturates"), "{err}");
}

#[test]
fn corrupted_relations_fail_verification_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify",
        arg(&scenario("aff2_corrupted.json")),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(code(&out), 4);
    let doc = read_json(&dir.path().join("verify.json"));
    assert_eq!(doc["verify"]["passed"], Value::Bool(false));
}

#[test]
fn damped_triangle_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify",
        arg(&scenario("damped_triangle.json")),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn traffic_demo_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = run(&[
            "traffic-demo",
            "--n",
            "4",
            "--seed",
            "3",
            "--horizon",
            "200",
            "--out",
            arg(d.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in ["trajectory.csv", "clusters.json", "velocities.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let doc = read_json(&a.path().join("clusters.json"));
    assert_eq!(doc["meta"]["seed"], 3);
    assert_eq!(doc["meta"]["rng"], "ChaCha8");
}

#[test]
fn traffic_demo_with_forced_offsets_splits_two_cars() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "traffic-demo",
        "--n",
        "2",
        "--seed",
        "1",
        "--v0",
        "0,50",
        "--v1",
        "10,10",
        "--horizon",
        "100",
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = read_json(&dir.path().join("clusters.json"));
    let v: Vec<f64> = doc["summary"]["velocities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!((v[0] - 10.0).abs() < 1e-4 && (v[1] - 40.0).abs() < 1e-4, "{v:?}");
    assert_eq!(doc["summary"]["clusters"].as_array().unwrap().len(), 2);
    assert_eq!(doc["summary"]["inter_cluster_saturated"], Value::Bool(true));
    let rows = std::fs::read_to_string(dir.path().join("velocities.csv")).unwrap();
    assert!(rows.starts_with("rank,node,velocity,cluster\n1,1,"), "{rows}");
}
