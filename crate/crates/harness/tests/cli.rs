//! Exit codes and file outputs of the `plsgd` binary.

use std::path::Path;
use std::process::{Command, Output};

const SMOKE: &str = r#"
horizon = 1000
trials = 24
seed = 5
record_noise = true

[problem]
kind = "quadratic"
curvatures = [0.5, 2.0]
chain_states = 4
offset_scale = 1.0
martingale_radius = 0.3

[schedule]
k0 = 10

[audits]
rate = true
rate_k_min = 100
r2_min = 0.5

[verify]
samples = 50
path_steps = 500

[output]
csv = "out/s.csv"
json = "out/s.json"
trajectories = "out/t.csv"
chain = "out/chain.txt"
"#;

fn plsgd(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plsgd")).args(args).env("PLSGD_THREADS", threads).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_every_output_and_rate_reproduces_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "smoke.toml", SMOKE);
    let out = plsgd(&["run", &cfg], "2");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS rate"));

    let base = dir.path().join("out");
    let csv = std::fs::read_to_string(base.join("s.csv")).unwrap();
    assert!(csv.starts_with("k,mean_delta,q_delta,hp_envelope,expected_bound\n"));
    let traj = std::fs::read_to_string(base.join("t.csv")).unwrap();
    assert!(traj.starts_with("trial,k,delta,grad_norm_sq,markov_mart_norm,correction_norm,raw_mart_norm\n"));
    assert_eq!(traj.lines().count(), 1 + 24 * 1001);
    assert!(base.join("chain.txt").exists());

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(base.join("s.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["trials"], 24);
    assert!(summary["constants"]["k0"].is_number());
    let slope = summary["fit"]["slope"].as_f64().unwrap();

    let csv_path = base.join("s.csv").to_string_lossy().into_owned();
    let rate = plsgd(&["rate", &csv_path, "--k-min", "100"], "1");
    assert_eq!(rate.status.code(), Some(0));
    let fit: serde_json::Value = serde_json::from_slice(&rate.stdout).unwrap();
    assert_eq!(fit["slope"].as_f64().unwrap(), slope);

    let narrow = plsgd(&["rate", &csv_path, "--slope-max", "-5"], "1");
    assert_eq!(narrow.status.code(), Some(1));
}

#[test]
fn failing_audit_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMOKE.replace("rate = true", "envelope = true\nenvelope_scale = 1e-12").replace("[schedule]\nk0 = 10", "[schedule]\nk0 = \"auto\"");
    let cfg = write(dir.path(), "bad.toml", &text);
    let out = plsgd(&["run", &cfg], "1");
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL envelope"));
}

#[test]
fn errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "smoke.toml", SMOKE);
    assert_eq!(plsgd(&["run", &cfg], "many").status.code(), Some(2));
    let broken = write(dir.path(), "broken.toml", "horizon = 5\n");
    assert_eq!(plsgd(&["run", &broken], "1").status.code(), Some(2));
    assert_eq!(plsgd(&["rate", "/nonexistent.csv"], "1").status.code(), Some(2));
}

#[test]
fn constants_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "smoke.toml", SMOKE);
    let out = plsgd(&["constants", &cfg], "1");
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["constants"]["hypotheses"].is_object());
    let out = plsgd(&["verify", &cfg], "1");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
}
