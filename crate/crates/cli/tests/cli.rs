//! End-to-end runs of the `platoon` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use platoon::sim::trace::{read_csv, replay_rows};
use platoon_cli::config::Config;
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platoon"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn example_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/example.toml");
    assert_eq!(Config::load(&path).unwrap(), Config::default());
}

#[test]
fn plan_trace_replays_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["plan", "--strategy", "sequential", "--seed", "4", "--n", "2", "--out", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = dir.path().join("run/trace.csv");
    let rows = read_csv(fs::File::open(&csv).unwrap()).unwrap();
    let config = Config::default();
    let vps = vec![config.vehicle(0); 2];
    assert!(replay_rows(&rows, &vps, &config.global).unwrap() < 1e-9);

    let summary = read_json(&dir.path().join("run/summary.json"));
    assert_eq!(summary["result"]["feasible_throughout"], Value::Bool(true));
    let z = summary["result"]["terminal_spacing_errors"].as_array().unwrap();
    assert!(z.iter().all(|e| e.as_f64().unwrap().abs() <= 1e-3));

    let out = run(dir.path(), &["plot", "run/trace.csv", "--out", "plots"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for panel in ["positions.svg", "speeds.svg", "controls.svg", "tracking_errors.svg"] {
        let svg = fs::read_to_string(dir.path().join("plots").join(panel)).unwrap();
        assert!(svg.contains("<svg") && svg.contains("polyline"), "{panel}");
    }
}

#[test]
fn plot_names_a_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["plan", "--strategy", "sequential", "--seed", "2", "--n", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(8);
            cells.join(",") + "\n"
        })
        .collect();
    fs::write(dir.path().join("cut.csv"), stripped).unwrap();
    let out = run(dir.path(), &["plot", "cut.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert!(err["message"].as_str().unwrap().contains("dv_err"), "{err}");
}

#[test]
fn summary_embeds_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[global]\ndelta_margin = 2.5\n[horizon]\nprediction = 4\n").unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "--lambda", "0.5", "mpc", "--steps", "3", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&dir.path().join("out/summary.json"));
    let config = &summary["config"];
    assert_eq!(config["global"]["delta_margin"], 2.5);
    assert_eq!(config["global"]["v_max"], 20.0);
    assert_eq!(config["horizon"]["lambda"], 0.5);
    assert_eq!(config["experiment"]["seed"], 5);
    assert_eq!(summary["result"]["steps"], 3);
    assert_eq!(summary["result"]["horizon"], 4);
    let resolved: Config = serde_json::from_value(config.clone()).unwrap();
    assert_eq!(resolved.global.delta_margin, 2.5);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[global]\ntau = 1.0\nspeed_limit = 3\n").unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "bounds"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert_eq!(err["key"], "global.speed_limit");
    assert!(err["message"].as_str().unwrap().contains("c.toml:3:"), "{err}");
}

#[test]
fn invalid_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[[vehicles]]\na_min = 1.0\n").unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "bounds"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["key"], "vehicles[0].a_min");
}

#[test]
fn bad_usage_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
    let out = run(dir.path(), &["--sigma", "wide", "bounds"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["key"], "--sigma");
}

#[test]
fn verify_lemma1_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["verify", "lemma1", "--samples", "100"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&dir.path().join("out/verify-lemma1.json"));
    assert_eq!(report["report"]["violations"], 0);
    assert_eq!(report["report"]["in_verified_regime"], true);
    assert_eq!(report["config"]["experiment"]["samples"], 100);
}

#[test]
fn verify_outside_the_verified_regime_says_so() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["verify", "lemma1", "--samples", "50", "--delta2", "0.3"]);
    assert!(matches!(out.status.code(), Some(0 | 1)));
    assert!(String::from_utf8_lossy(&out.stdout).contains("outside the verified regime"));
    let report = read_json(&dir.path().join("out/verify-lemma1.json"));
    assert_eq!(report["report"]["in_verified_regime"], false);
    assert_eq!(report["config"]["global"]["delta2"], 0.3);
}

#[test]
fn verify_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["verify", "qp", "--samples", "30", "--seed", "11"];
    assert_eq!(run(dir.path(), &args).status.code(), Some(0));
    let first = fs::read(dir.path().join("out/verify-qp.json")).unwrap();
    assert_eq!(run(dir.path(), &args).status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("out/verify-qp.json")).unwrap(), first);
}

#[test]
fn bounds_lists_every_follower_and_the_blend() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[scenario]\nn = 3\nheterogeneous = true\n").unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "horizon", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("out/bounds.json"));
    let rows = report["result"]["vehicles"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let platoon = &report["result"]["platoon"];
    let p_e: Vec<u64> = rows.iter().map(|r| r["p_e"].as_u64().unwrap()).collect();
    assert_eq!(platoon["sum"], p_e.iter().sum::<u64>());
    assert_eq!(platoon["max"], *p_e.iter().max().unwrap());
    assert!(String::from_utf8_lossy(&out.stdout).contains("blend"));

    let out = run(dir.path(), &["--config", "c.toml", "bounds", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("shrink law stalls"));
    let report = read_json(&dir.path().join("out/bounds.json"));
    assert!(report["result"]["platoon"].is_null());
}

#[test]
fn explicit_platoon_on_its_desired_spacing_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    // Desired spacing at equal speeds 15 m/s: 5 + 3 * 15 + 2 = 52 m.
    let cfg = "[scenario.explicit]\nleader_speed = 15.0\nspeeds = [15.0, 15.0]\ngaps = [52.0, 52.0]\n";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "plan", "--strategy", "sequential"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(fs::File::open(dir.path().join("out/trace.csv")).unwrap()).unwrap();
    for r in rows.iter().filter(|r| r.vehicle_id > 0) {
        assert!(r.dx_err.unwrap().abs() < 1e-9 && r.dv_err.unwrap().abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn single_follower_strategy_rejects_a_platoon() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["plan", "--strategy", "brake", "--n", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("sequential"));
}
