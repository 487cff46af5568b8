use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sharedcam"));
    cmd.env_remove("SHAREDCAM_CONFIG");
    cmd
}

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn validate_shipped_files() {
    let out = run(bin()
        .args(["--json", "validate", "--scene"])
        .arg(data("scene_reference.json"))
        .arg("--config")
        .arg(data("config_default.json"))
        .arg("--scenario")
        .arg(data("scenarios/orbit.json")));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["valid"].as_array().unwrap().len(), 3);
}

#[test]
fn missing_scene_is_an_input_error() {
    let out = run(bin().args(["validate", "--scene", "/nonexistent/scene.json"]));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene.json"));
}

#[test]
fn bad_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"tick_rate": 500}"#).unwrap();
    let out = run(bin().arg("validate").arg("--config").arg(&cfg));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tick_rate"));

    std::fs::write(&cfg, r#"{"solver": {"max_iters": "many"}}"#).unwrap();
    let out = run(bin().arg("validate").arg("--config").arg(&cfg));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.max_iters"));
}

#[test]
fn unknown_scripted_message_is_a_scenario_error() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("bad.json");
    std::fs::write(
        &scn,
        r#"{"ticks": 10, "commands": [{"t": 0.1, "role": "helper", "message": {"type": "teleport"}}]}"#,
    )
    .unwrap();
    let out = run(bin()
        .args(["scenario", "--scene"])
        .arg(data("scene_reference.json"))
        .arg("--scenario")
        .arg(&scn)
        .arg("--out")
        .arg(dir.path().join("o.jsonl")));
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn occupied_port_is_an_environment_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = run(bin()
        .args(["serve", "--ticks", "1", "--listen", &addr, "--scene"])
        .arg(data("scene_reference.json")));
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn serve_stops_at_tick_limit() {
    let out = run(bin()
        .args(["--json", "serve", "--ticks", "5", "--listen", "127.0.0.1:0", "--scene"])
        .arg(data("scene_reference.json")));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("listening"));
    assert!(text.contains("\"ticks\": 5"));
}

#[test]
fn scenario_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("orbit.jsonl");
    let out = run(bin()
        .args(["--json", "scenario", "--ticks", "90", "--scene"])
        .arg(data("scene_reference.json"))
        .arg("--scenario")
        .arg(data("scenarios/orbit.json"))
        .arg("--out")
        .arg(&log));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["ticks"], 90);

    let out = run(bin().args(["--json", "replay"]).arg(&log));
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["identical"], true);
    assert_eq!(report["replayed_hash"], summary["snapshot_hash"]);

    // Editing one recorded joint angle is caught as a divergence.
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let idx = lines.iter().rposition(|l| l.contains("\"type\":\"snapshot\"")).unwrap();
    let mut snap: serde_json::Value = serde_json::from_str(&lines[idx]).unwrap();
    let q0 = snap["snapshot"]["q"][0].as_f64().unwrap();
    snap["snapshot"]["q"][0] = serde_json::json!(q0 + 1e-3);
    lines[idx] = snap.to_string();
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();
    let out = run(bin().arg("replay").arg(&log));
    assert_eq!(code(&out), 1);
}

#[test]
fn replay_of_foreign_version_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("old.jsonl");
    let out = run(bin()
        .args(["scenario", "--ticks", "3", "--scene"])
        .arg(data("scene_reference.json"))
        .arg("--scenario")
        .arg(data("scenarios/point.json"))
        .arg("--out")
        .arg(&log));
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&log).unwrap();
    let (head, rest) = text.split_once('\n').unwrap();
    let mut header: serde_json::Value = serde_json::from_str(head).unwrap();
    header["version"] = "0.0.1".into();
    std::fs::write(&log, format!("{header}\n{rest}")).unwrap();
    let out = run(bin().arg("replay").arg(&log));
    assert_eq!(code(&out), 4);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("0.0.1") && err.contains(env!("CARGO_PKG_VERSION")),
        "{err}"
    );
}

#[test]
fn bench_reports_percentiles() {
    let out = run(bin()
        .args(["--json", "bench", "--iters", "50", "--scene"])
        .arg(data("scene_reference.json")));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["iters"], 50);
    assert!(report["p95_ms"].as_f64().unwrap() >= report["p50_ms"].as_f64().unwrap());
}

#[test]
fn nothing_to_validate_is_an_input_error() {
    assert_eq!(code(&run(bin().arg("validate"))), 2);
}
