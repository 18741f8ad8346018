use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_decouple"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// A scratch directory unique to one test.
fn scratch(test: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("decouple-cli-{}-{test}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = bin();
    for a in args {
        cmd.arg(a);
    }
    cmd.output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn zeros_of_sys_b() {
    let out = run(&[&"zeros", &fixture("sys_b.json")]);
    let v = json(&out);
    let zeros = v["zeros"].as_array().unwrap();
    assert_eq!(zeros.len(), 1);
    assert!((zeros[0]["re"].as_f64().unwrap() + 3.0).abs() < 1e-6);
    assert_eq!(zeros[0]["im"].as_f64().unwrap(), 0.0);
    assert_eq!(zeros[0]["geometric"], 1);
    assert_eq!(zeros[0]["algebraic"], 1);
    assert_eq!(zeros[0]["minimum_phase"], true);
    assert_eq!(v["normal_rank"], 5);
}

#[test]
fn region_flag_changes_minimum_phase() {
    let out = run(&[&"zeros", &fixture("sys_b.json"), &"--region", &"lhp:-5"]);
    assert_eq!(json(&out)["zeros"][0]["minimum_phase"], false);
}

#[test]
fn infeasible_real_problem_on_sys_c_exits_zero() {
    let dir = scratch("check");
    let p = write(&dir, "p1b.json", r#"{"problem":"1B","nu":[1,1],"modes":[[-3],[-5]]}"#);
    let v = json(&run(&[&"check", &fixture("sys_c.json"), &p]));
    assert_eq!(v["verdict"], false);
    assert_eq!(v["complex_case"], true);
    let stages = v["stages"].as_array().unwrap();
    assert!(stages[0]["ledger"]["verdict"].as_bool().unwrap(), "real-case conditions should pass");
    let splits = v["splits_tried"].as_array().unwrap();
    assert!(!splits.is_empty() && splits.iter().all(|s| s["verdict"] == false));
}

#[test]
fn subspaces_of_sys_b() {
    let v = json(&run(&[&"subspaces", &fixture("sys_b.json")]));
    assert_eq!(v["r_star"]["dim"], 0);
    assert_eq!(v["v_star_g"]["dim"], 1);
    let first = &v["outputs"][0];
    assert_eq!(first["output"], 1);
    assert_eq!(first["r_star_i"]["dim"], 1);
    assert_eq!(first["v_star_g_i"]["dim"], 2);
    assert_eq!(first["l_i"]["dim"], 1);
    let only = json(&run(&[&"subspaces", &fixture("sys_b.json"), &"--only", &"r_star"]));
    assert_eq!(only.as_object().unwrap().keys().collect::<Vec<_>>(), ["r_star"]);
}

#[test]
fn synth_then_verify_round_trip() {
    let dir = scratch("round-trip");
    let fb = dir.join("fb.json");
    let sys = data("random5.json");
    let prob = data("random5_2a.json");
    let out = run(&[&"synth", &sys, &prob, &"--seed", &"7", &"-o", &fb]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&fb).unwrap()).unwrap();
    assert_eq!(s["seed"], 7);
    assert_eq!(s["F"].as_array().unwrap().len(), 2);
    assert_eq!(s["assignment"].as_array().unwrap().len(), 5);

    let trace = dir.join("trace.csv");
    let v = json(&run(&[&"verify", &sys, &fb, &prob, &"--trace", &trace]));
    assert_eq!(v["verdict"], true);
    assert_eq!(v["per_output_counts"], serde_json::json!([3, 2]));
    assert!(v["tracking_residual"].as_f64().unwrap() <= 1e-8);
    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,eps1,eps2"));
    assert!(lines.all(|l| l.split(',').count() == 3));
}

#[test]
fn verify_rejects_zero_feedback() {
    let dir = scratch("zero-feedback");
    let fb = write(&dir, "fb.json", r#"{"F": [[0,0,0,0,0],[0,0,0,0,0]]}"#);
    let v = json(&run(&[&"verify", &data("random5.json"), &fb, &data("random5_2a.json")]));
    assert_eq!(v["verdict"], false);
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let args: [&dyn AsRef<std::ffi::OsStr>; 5] =
        [&"synth", &data("random5.json"), &data("random5_2a.json"), &"--seed", &"3"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&[&"check", &data("random5.json"), &data("random5_2a.json")]);
    let d = run(&[&"check", &data("random5.json"), &data("random5_2a.json")]);
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn usage_errors_exit_one() {
    let dir = scratch("usage");
    let bad = write(&dir, "bad.json", r#"{"problem":"4Z","nu":[1]}"#);
    for out in [
        run(&[&"frobnicate"]),
        run(&[&"zeros", &dir.join("missing.json")]),
        run(&[&"zeros", &fixture("sys_b.json"), &"--region", &"square"]),
        run(&[&"check", &fixture("sys_b.json"), &bad]),
        run(&[&"zeros", &fixture("sys_b.json"), &"--rtol", &"2"]),
    ] {
        assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn unsolvable_synthesis_exits_two() {
    let dir = scratch("unsolvable");
    let p = write(&dir, "p1b.json", r#"{"problem":"1B","nu":[1,1],"modes":[[-3],[-5]]}"#);
    let out = run(&[&"synth", &fixture("sys_c.json"), &p]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}
