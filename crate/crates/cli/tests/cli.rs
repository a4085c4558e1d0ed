use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use institution_core::graph::{canonical_four_state, GovernanceGraph, TopologyParams};

fn fixture(relative: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(relative)
}

fn engine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_institution-engine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_configs_validate() {
    for name in ["cournot_collusive.toml", "cournot_q_learning.toml", "public_goods_best_response.toml", "pd_scripted.toml"] {
        let o = engine(&["validate", "--config", path(&fixture(&format!("configs/{name}")))]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}{}", stdout(&o), stderr(&o));
    }
}

#[test]
fn dangling_or_else_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.toml");
    std::fs::write(
        &manifest,
        "version = \"1\"\n[[statements]]\nid = \"collusion_rule\"\ndeontic = \"must_not\"\nor_else = \"teleport\"\naim = { atom = { field = \"quantity\", cmp = \"<\", value = 27.0 } }\n",
    )
    .unwrap();
    let o = engine(&["validate", "--manifest", path(&manifest), "--topology", "two_state"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("teleport"), "{}", stdout(&o));
}

#[test]
fn unreadable_input_is_an_environment_failure() {
    let o = engine(&["validate", "--manifest", "/nonexistent/manifest.toml", "--topology", "two_state"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/manifest.toml"));
    let o = engine(&["simulate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_outputs_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = fixture("configs/cournot_nash_scripted.toml");
    let o = engine(&["simulate", "--config", path(&config), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.contains("compliance_rate=1.000000"), "{line}");
    assert!(line.contains("mean_collusion_index=0.000000"), "{line}");
    let files = ["metrics.csv", "summary.json", "events.jsonl"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();

    let again = engine(&["simulate", "--config", path(&config), "--out", path(&out)]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"));

    let forced = engine(&["simulate", "--config", path(&config), "--out", path(&out), "--force"]);
    assert_eq!(forced.status.code(), Some(0));
    let second: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn collusive_run_escalates_and_its_log_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("configs/cournot_collusive.toml");
    let o = engine(&["simulate", "--config", path(&config), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("transitions=6"), "{}", stdout(&o));

    let log = dir.path().join("events.jsonl");
    let o = engine(&["verify-log", path(&log)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen("\"amount\":200.0", "\"amount\":100.0", 1);
    assert_ne!(text, tampered);
    let bad = dir.path().join("tampered.jsonl");
    std::fs::write(&bad, tampered).unwrap();
    let o = engine(&["verify-log", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("broken at event"), "{}", stdout(&o));
}

#[test]
fn calibrate_reports_the_public_goods_gain() {
    let o = engine(&["calibrate", "--config", path(&fixture("configs/public_goods_best_response.toml"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("max_deviation_gain=5\n"), "{}", stdout(&o));
    assert!(stdout(&o).contains("incentive_compatible=true"));
}

#[test]
fn calibrate_emits_the_shipped_calibrated_graph() {
    let dir = tempfile::tempdir().unwrap();
    let o = engine(&[
        "calibrate",
        "--config",
        path(&fixture("configs/cournot_q_learning.toml")),
        "--gain",
        "126.5625",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let emitted = std::fs::read_to_string(dir.path().join("calibrated_graph.toml")).unwrap();
    let shipped = std::fs::read_to_string(fixture("graphs/cournot_four_state_calibrated.toml")).unwrap();
    assert_eq!(emitted, shipped);
}

#[test]
fn sweep_uses_the_flag_grid() {
    let o = engine(&[
        "sweep",
        "--config",
        path(&fixture("configs/public_goods_best_response.toml")),
        "--sanction-grid",
        "0,10",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: Vec<Vec<String>> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2], "0.000000");
    assert_eq!(rows[1][2], "1.000000");
}

#[test]
fn analyze_flags_threshold_gaming() {
    let o = engine(&["analyze", "--config", path(&fixture("configs/cournot_collusive.toml"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("ThresholdGaming"), "{}", stdout(&o));
    assert!(stdout(&o).contains("margin=72"));
}

#[test]
fn export_writes_one_record_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = engine(&[
        "export-rlinf",
        "--config",
        path(&fixture("configs/cournot_nash_scripted.toml")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("rlinf.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 182);
    for line in text.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn emit_canonical_matches_the_constructor() {
    let o = engine(&["emit-canonical", "--topology", "four_state"]);
    assert_eq!(o.status.code(), Some(0));
    let graph = GovernanceGraph::from_toml(&stdout(&o)).unwrap();
    assert_eq!(graph, canonical_four_state(&TopologyParams::default()));
}

#[test]
fn seed_override_and_log_level_are_accepted() {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_institution-engine"));
    cmd.env("INSTITUTION_ENGINE_LOG_LEVEL", "debug").args([
        "simulate",
        "--config",
        path(&fixture("configs/pd_scripted.toml")),
        "--seed-override",
        "99",
    ]);
    let o = cmd.output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
