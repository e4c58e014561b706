//! End-to-end runs of the `delaylmi` binary against temporary configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_delaylmi");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run_task(task: &str, cfg: &Value, extra: &[&str]) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", cfg);
    let out = dir.path().join("out");
    let mut args = vec![task, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    (dir, o)
}

fn read_json(dir: &TempDir, file: &str) -> Value {
    let text = std::fs::read_to_string(dir.path().join("out").join(file)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn scalar_system(a: f64, a_d: f64, d_big: usize) -> Value {
    json!({
        "system": { "A": [[a]], "A_n": [[0.0]], "A_d": [[a_d]] },
        "delays": { "d_m": 1, "d_n": 1, "d_M": d_big },
        "check": { "trajectories": 10, "horizon": 100, "seed": 1 }
    })
}

fn example_plant() -> Value {
    json!({ "A_p": [[0.6693, -0.0042], [0.4231, 1.0501]], "B_p": [[0.1647], [0.0960]] })
}

/// Drops wall-clock fields so that two runs can be compared.
fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.retain(|k, _| k != "timing" && !k.ends_with("seconds"));
            m.values_mut().for_each(strip_timing);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[test]
fn help_and_version_exit_cleanly() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("analyze"));
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["analyze"])), 1, "missing --config");
    assert_eq!(code(&run(&["analyze", "--config", "/nonexistent/run.json", "--out", "/tmp/x"])), 1);
}

#[test]
fn invalid_configs_exit_with_one() {
    let mut reversed = scalar_system(0.5, 0.1, 2);
    reversed["delays"] = json!({ "d_m": 3, "d_n": 2, "d_M": 1 });
    let mut ragged = scalar_system(0.5, 0.1, 2);
    ragged["system"]["A"] = json!([[0.5, 1.0], [0.2]]);
    let mut unknown = scalar_system(0.5, 0.1, 2);
    unknown["colour"] = json!("blue");
    for cfg in [reversed, ragged, unknown] {
        let (_d, o) = run_task("analyze", &cfg, &[]);
        assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut eps = json!({ "plant": example_plant(), "delays": { "d_m": 1, "d_n": 1, "d_M": 3 }, "epsilon": 0.5 });
    let (_d, o) = run_task("design", &eps, &[]);
    assert_eq!(code(&o), 1);
    eps["epsilon"] = json!(-1.0);
    assert_eq!(code(&run_task("design", &eps, &[]).1), 1);
}

#[test]
fn stable_scalar_system_is_certified() {
    let (dir, o) = run_task("analyze", &scalar_system(0.5, 0.1, 2), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir, "analyze.json");
    assert_eq!(r["status"], "feasible");
    assert_eq!(r["exit_code"], 0);
    assert_eq!(r["header"]["tool"], "delaylmi");
    assert_eq!(r["header"]["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["verified"], true);
}

#[test]
fn unstable_scalar_system_is_infeasible() {
    let (dir, o) = run_task("analyze", &scalar_system(1.2, 0.0, 2), &[]);
    assert_eq!(code(&o), 2);
    assert_eq!(read_json(&dir, "analyze.json")["status"], "infeasible");
}

#[test]
fn uncontrollable_plant_design_is_infeasible() {
    let cfg = json!({
        "plant": { "A_p": [[1.2, 0.0], [0.1, 0.9]], "B_p": [[0.0], [0.0]] },
        "delays": { "d_m": 1, "d_n": 1, "d_M": 2 },
        "epsilon": -0.5
    });
    let (dir, o) = run_task("design", &cfg, &[]);
    assert_eq!(code(&o), 2);
    assert_eq!(read_json(&dir, "design.json")["status"], "infeasible");
    assert!(!dir.path().join("out/gains.json").exists());
}

#[test]
fn design_far_beyond_the_certified_range_is_infeasible() {
    // Certified range for this tuning ends below 20; d_M = 30 must fail.
    let cfg = json!({
        "plant": example_plant(),
        "delays": { "d_m": 1, "d_n": 1, "d_M": 30 },
        "epsilon": -0.995
    });
    let (dir, o) = run_task("design", &cfg, &[]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_json(&dir, "design.json");
    assert_eq!(d["status"], "infeasible");
    assert!(d["gains"].is_null());
}

#[test]
fn design_writes_gains_that_reanalyze() {
    let cfg = json!({
        "plant": example_plant(),
        "delays": { "d_m": 1, "d_n": 1, "d_M": 4 },
        "epsilon": -0.5,
        "check": { "trajectories": 10, "horizon": 200, "seed": 2, "brute_force": false }
    });
    let (dir, o) = run_task("design", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let g = read_json(&dir, "gains.json");
    assert_eq!(g["K"].as_array().unwrap().len(), 1);
    assert_eq!(g["L"].as_array().unwrap().len(), 2);
    let d = read_json(&dir, "design.json");
    assert_eq!(d["transferred_certificate_passes"], true);
    assert_eq!(d["reanalysis"]["solve"]["status"], "feasible");
    assert_eq!(d["reanalysis"]["verified"], true);
}

#[test]
fn analysis_reports_are_deterministic() {
    let cfg = scalar_system(0.6, 0.2, 3);
    let (a, oa) = run_task("analyze", &cfg, &["--jobs", "1"]);
    let (b, ob) = run_task("analyze", &cfg, &["--jobs", "1"]);
    assert_eq!(code(&oa), code(&ob));
    let (mut ra, mut rb) = (read_json(&a, "analyze.json"), read_json(&b, "analyze.json"));
    strip_timing(&mut ra);
    strip_timing(&mut rb);
    assert_eq!(ra, rb);
}

#[test]
fn zero_system_simulates_to_zero() {
    let cfg = json!({
        "system": { "A": [[0.0, 0.0], [0.0, 0.0]], "A_n": [[0.0, 0.0], [0.0, 0.0]], "A_d": [[0.0, 0.0], [0.0, 0.0]] },
        "delays": { "d_m": 1, "d_n": 1, "d_M": 2 },
        "simulation": { "horizon": 20, "certify": false, "seed": 4 }
    });
    let (dir, o) = run_task("simulate", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("out/trajectory.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    let cols: Vec<usize> = headers.iter().enumerate().filter(|(_, h)| h.starts_with('x')).map(|(i, _)| i).collect();
    assert_eq!(cols.len(), 2);
    let rows: Vec<_> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 21);
    for r in &rows[1..] {
        for &c in &cols {
            assert_eq!(r[c].parse::<f64>().unwrap(), 0.0);
        }
    }
    assert!(dir.path().join("out/trajectory.svg").exists());
}

#[test]
fn fixed_seed_gives_identical_trajectories() {
    let mut cfg = scalar_system(0.7, 0.2, 4);
    cfg["simulation"] = json!({ "horizon": 60, "signal": { "kind": "uniform-random", "seed": 5 }, "seed": 9 });
    let (a, _) = run_task("simulate", &cfg, &[]);
    let (b, _) = run_task("simulate", &cfg, &[]);
    let (c, _) = run_task("simulate", &cfg, &["--seed", "10"]);
    let read = |d: &TempDir| std::fs::read_to_string(d.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let s = read_json(&a, "simulate.json");
    assert_eq!(s["certified"], true);
    assert!(a.path().join("out/functional.svg").exists());
}

#[test]
fn sweep_reports_points_without_any_feasible_delay() {
    let cfg = json!({
        "plant": example_plant(),
        "delays": { "d_m": 1, "d_n": 1, "d_M": 1 },
        "sweep": { "epsilons": [-0.5, 0.0], "d_n": [1, 8], "d_M_cap": 9 }
    });
    let (dir, o) = run_task("sweep", &cfg, &["--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<_> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!((&rows[0][0], &rows[0][1]), ("-0.5", "1"));
    assert_eq!(&rows[0][2], "6");
    let last = &rows[3];
    assert_eq!((&last[0], &last[1]), ("0", "8"));
    assert_eq!(&last[2], "", "no feasible d_M for eps = 0 at d_n = 8");
    assert_eq!(&last[3], "infeasible@8");
    assert!(dir.path().join("out/sweep.svg").exists());
}

#[test]
fn exported_problem_matches_the_fixture() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/lemma2_scalar.dat-s");
    let cfg = json!({
        "problem": "lemma2",
        "system": { "A": [[0.5]], "A_n": [[0.0]], "A_d": [[0.1]] },
        "delays": { "d_m": 1, "d_n": 1, "d_M": 2 }
    });
    let (dir, o) = run_task("export-sdpa", &cfg, &[]);
    assert_eq!(code(&o), 0);
    let exported = std::fs::read_to_string(dir.path().join("out/problem.dat-s")).unwrap();
    assert_eq!(exported, std::fs::read_to_string(fixture).unwrap());
    assert_eq!(read_json(&dir, "problem.json")["n_vars"], 14);
}

#[test]
fn external_sdpa_solution_is_checked() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let sol = fixtures.join("lemma2_scalar.sol");
    let cfg = json!({
        "problem": "lemma2",
        "system": { "A": [[0.5]], "A_n": [[0.0]], "A_d": [[0.1]] },
        "delays": { "d_m": 1, "d_n": 1, "d_M": 2 },
        "certificate": { "solution": sol, "format": "sdpa" }
    });
    let (dir, o) = run_task("check-certificate", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&dir, "check.json")["passed"], true);

    // The same numbers certify nothing for an unstable system.
    let mut bad = cfg.clone();
    bad["system"]["A"] = json!([[1.2]]);
    let (dir, o) = run_task("check-certificate", &bad, &[]);
    assert_eq!(code(&o), 2);
    assert_eq!(read_json(&dir, "check.json")["passed"], false);
}

#[test]
fn analyze_report_round_trips_through_check_certificate() {
    let dir = TempDir::new().unwrap();
    let cfg = scalar_system(0.5, 0.1, 3);
    let path = write_config(dir.path(), "a.json", &cfg);
    let out = dir.path().join("a");
    assert_eq!(code(&run(&["analyze", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);

    let mut check = cfg.clone();
    check["certificate"] = json!({ "solution": "a/analyze.json" });
    let path = write_config(dir.path(), "c.json", &check);
    let out = dir.path().join("c");
    let o = run(&["check-certificate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
