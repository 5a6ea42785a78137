use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const OBSERVER_POLES: &str = "-0.5378,0.4233+0.0990i,0.4233-0.0990i,0.0304,0.1249";

fn targetctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_targetctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn write_model(dir: &TempDir, name: &str, model: Value) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, model.to_string()).unwrap();
    path
}

fn generate(dir: &TempDir, source: &[&str], name: &str) -> PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["generate", "--seed", "1", "--input", "gaussian", "--out", path_str(&path)];
    args.splice(1..1, source.iter().copied());
    let out = targetctl(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn case_data(dir: &TempDir, case: &str) -> PathBuf {
    let path = dir.path().join(format!("{case}.csv"));
    let out = targetctl(&["generate", "--case", case, "--out", path_str(&path)]);
    assert_eq!(code(&out), 0);
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(value: &Value, def: &str) {
    let mut schema: Value =
        serde_json::from_str(include_str!("../../../schemas/outputs.schema.json")).unwrap();
    schema["$ref"] = json!(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{def}: {errors:?}");
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v.clone()).unwrap()
}

// A = diag(0.5, 0.8) with the second mode unreachable from u.
fn uncontrollable(dir: &TempDir, slow: f64) -> PathBuf {
    write_model(
        dir,
        "uncontrollable.json",
        json!({"A": [[0.5, 0.0], [0.0, slow]], "B": [[1.0], [0.0]], "F": [[1.0, 0.0], [0.0, 1.0]]}),
    )
}

#[test]
fn check_exit_codes_follow_verdict() {
    let dir = TempDir::new().unwrap();
    let c1 = case_data(&dir, "case1");
    let report = dir.path().join("report.json");
    let out = targetctl(&["check", "--data", path_str(&c1), "--out", path_str(&report)]);
    assert_eq!(code(&out), 0);
    let rep = read_json(&report);
    assert_schema(&rep, "existence_report");
    assert_eq!(rep["verdict"], "exists");

    let c2 = case_data(&dir, "case2");
    assert_eq!(code(&targetctl(&["check", "--data", path_str(&c2)])), 3);

    let stable = uncontrollable(&dir, 0.8);
    let data = generate(&dir, &["--model", path_str(&stable)], "stable.csv");
    assert_eq!(code(&targetctl(&["check", "--data", path_str(&data)])), 2);

    let unstable = uncontrollable(&dir, 1.2);
    let data = generate(&dir, &["--model", path_str(&unstable)], "unstable.csv");
    assert_eq!(code(&targetctl(&["check", "--data", path_str(&data)])), 3);
}

#[test]
fn malformed_inputs_exit_1() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&targetctl(&["check", "--data", path_str(&empty)])), 1);
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&targetctl(&["check", "--data", path_str(&missing)])), 1);
    let c1 = case_data(&dir, "case1");
    let bad_poles = targetctl(&["synthesize", "--data", path_str(&c1), "--poles", "0.3+0.1i"]);
    assert_eq!(code(&bad_poles), 1);
    assert_eq!(code(&targetctl(&["synthesize", "--data", path_str(&c1)])), 1);
    assert_eq!(code(&targetctl(&["frobnicate"])), 1);
}

#[test]
fn synthesize_case1_places_pole() {
    let dir = TempDir::new().unwrap();
    let c1 = case_data(&dir, "case1");
    let model = dir.path().join("case1_model.json");
    let k = dir.path().join("k.json");
    let out = targetctl(&["oracle", "--case", "case1", "--out", path_str(&model)]);
    assert_eq!(code(&out), 0);
    assert_schema(&read_json(&model), "oracle_report");

    let plant = write_model(
        &dir,
        "plant.json",
        json!({
            "A": [[1.0, 0.5, -1.0, 0.0, 1.0], [0.3, 0.5, -0.6, -0.3, 0.3], [-0.6, 0.0, 0.2, 0.6, -0.6],
                  [1.25, 0.5, -1.0, -0.25, 1.75], [-0.75, 0.0, 0.0, 0.75, -0.25]],
            "B": [[1.0, -1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            "F": [[1.0, 1.0, -2.0, 0.0, 2.0]]
        }),
    );
    let out = targetctl(&[
        "synthesize", "--data", path_str(&c1), "--poles", "0.39", "--model", path_str(&plant), "--out", path_str(&k),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cd = read_json(&k);
    assert_schema(&cd, "controller_design");
    let n = matrix(&cd["N"]);
    assert!((n[0][0] - 0.39).abs() < 1e-8);
    let t1 = matrix(&cd["T1"]);
    assert!((t1[0][0] - 2.0).abs() < 1e-6 && (t1[0][1] - 2.0).abs() < 1e-6);
}

#[test]
fn non_schur_poles_are_placed_exactly() {
    let dir = TempDir::new().unwrap();
    let c1 = case_data(&dir, "case1");
    let out = targetctl(&["synthesize", "--data", path_str(&c1), "--poles", "2.0"]);
    assert_eq!(code(&out), 0);
    let cd: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((matrix(&cd["N"])[0][0] - 2.0).abs() < 1e-8);
}

#[test]
fn uncontrollable_target_fails_synthesis_and_augmentation() {
    let dir = TempDir::new().unwrap();
    let model = uncontrollable(&dir, 0.8);
    let data = generate(&dir, &["--model", path_str(&model)], "unc.csv");
    assert_eq!(code(&targetctl(&["synthesize", "--data", path_str(&data), "--poles", "0.1,0.2"])), 3);
    let out = targetctl(&["augment", "--data", path_str(&data), "--poles", "0.1,0.2"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no augmentation can help"));
}

#[test]
fn stabilize_moves_poles_inside() {
    let dir = TempDir::new().unwrap();
    let c1 = case_data(&dir, "case1");
    let out = targetctl(&["synthesize", "--data", path_str(&c1), "--stabilize"]);
    assert_eq!(code(&out), 0);
    let cd: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(matrix(&cd["N"])[0][0].abs() < 0.95);
}

#[test]
fn augment_case2_gives_order_two_and_case1_passes_through() {
    let dir = TempDir::new().unwrap();
    let c2 = case_data(&dir, "case2");
    let aug = dir.path().join("aug.json");
    let out = targetctl(&["augment", "--data", path_str(&c2), "--poles", "0.3,0.4", "--out", path_str(&aug)]);
    assert_eq!(code(&out), 0);
    let design = read_json(&aug);
    assert_schema(&design, "augmented_design");
    assert_eq!(design["augmentation"]["d_min"], 1);
    assert_eq!(design["controller"]["order"], 2);

    let trace = dir.path().join("trace.csv");
    let out = targetctl(&[
        "simulate", "--case", "case2", "--controller", path_str(&aug), "--steps", "60", "--out", path_str(&trace),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("t,z1,rx1,x1,"));
    assert_eq!(text.lines().count(), 62);

    let c1 = case_data(&dir, "case1");
    let out = targetctl(&["augment", "--data", path_str(&c1), "--poles", "0.39"]);
    assert_eq!(code(&out), 0);
    let design: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(design["augmentation"]["d_min"], 0);
    assert_eq!(design["controller"]["order"], 1);
}

#[test]
fn observer_outputs_and_failures() {
    let dir = TempDir::new().unwrap();
    let c1 = case_data(&dir, "case1");
    let obs = dir.path().join("obs.json");
    let out = targetctl(&["observe", "--data", path_str(&c1), "--obs-poles", OBSERVER_POLES, "--out", path_str(&obs)]);
    assert_eq!(code(&out), 0);
    assert_schema(&read_json(&obs), "observer_design");

    let out = targetctl(&["observe", "--data", path_str(&c1), "--obs-poles", OBSERVER_POLES, "--poles", "0.39"]);
    assert_eq!(code(&out), 0);
    assert_schema(&serde_json::from_slice(&out.stdout).unwrap(), "closed_loop_spec");

    let unobservable = write_model(
        &dir,
        "unobs.json",
        json!({"A": [[0.5, 0.0], [0.0, 0.8]], "B": [[1.0], [1.0]], "C": [[1.0, 0.0]], "F": [[1.0, 0.0]]}),
    );
    let data = generate(&dir, &["--model", path_str(&unobservable)], "unobs.csv");
    assert_eq!(code(&targetctl(&["observe", "--data", path_str(&data), "--obs-poles", "0.1,0.2"])), 4);

    let full = write_model(
        &dir,
        "full.json",
        json!({"A": [[1.1, 0.3], [0.0, 0.7]], "B": [[1.0], [1.0]], "C": [[1.0, 0.0], [0.0, 1.0]], "F": [[1.0, 0.0]]}),
    );
    let data = generate(&dir, &["--model", path_str(&full)], "full.csv");
    let out = targetctl(&["observe", "--data", path_str(&data), "--obs-poles", "0,0"]);
    assert_eq!(code(&out), 0);
    let od: Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = matrix(&od["Sigma_Xp"]);
    let sq = |i: usize, j: usize| s[i][0] * s[0][j] + s[i][1] * s[1][j];
    assert!((0..2).all(|i| (0..2).all(|j| sq(i, j).abs() < 1e-10)), "Sigma_Xp not nilpotent: {s:?}");
}

#[test]
fn observer_based_simulation_writes_estimation_error() {
    let dir = TempDir::new().unwrap();
    let c1 = case_data(&dir, "case1");
    let k = dir.path().join("k.json");
    let obs = dir.path().join("obs.json");
    assert_eq!(code(&targetctl(&["synthesize", "--data", path_str(&c1), "--poles", "0.39", "--out", path_str(&k)])), 0);
    assert_eq!(
        code(&targetctl(&["observe", "--data", path_str(&c1), "--obs-poles", OBSERVER_POLES, "--out", path_str(&obs)])),
        0
    );
    let out = targetctl(&["simulate", "--case", "case1", "--controller", path_str(&k), "--observer", path_str(&obs)]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,z1,e_norm,x1,"));
    let last: Vec<f64> = text.lines().last().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert!(last[0].abs() < 1e-6 && last[1] < 1e-6);
}

#[test]
fn oracle_comparison_agrees_on_case2() {
    let dir = TempDir::new().unwrap();
    let c2 = case_data(&dir, "case2");
    let out = targetctl(&["oracle", "--case", "case2", "--data", path_str(&c2)]);
    assert_eq!(code(&out), 0);
    let cmp: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_schema(&cmp, "oracle_comparison");
    assert_eq!(cmp["agree"], true);
    assert_eq!(cmp["oracle"]["d_min"], 1);
}

#[test]
fn generated_json_dataset_round_trips() {
    let dir = TempDir::new().unwrap();
    let json_path = generate(&dir, &["--case", "case1"], "c1.json");
    assert_schema(&read_json(&json_path), "dataset");
    let csv_path = generate(&dir, &["--case", "case1"], "c1.csv");
    let a = targetctl(&["check", "--data", path_str(&json_path)]);
    let b = targetctl(&["check", "--data", path_str(&csv_path)]);
    assert_eq!(String::from_utf8(a.stdout).unwrap(), String::from_utf8(b.stdout).unwrap());
}

#[test]
fn demos_pass_and_are_deterministic() {
    for case in ["case1", "case2"] {
        let dir = TempDir::new().unwrap();
        let first = dir.path().join("a");
        let second = dir.path().join("b");
        let out = targetctl(&["demo", case, "--seed", "3", "--out", path_str(&first)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(code(&targetctl(&["demo", case, "--seed", "3", "--out", path_str(&second)])), 0);
        let summary = read_json(&first.join("summary.json"));
        assert_schema(&summary, "demo_summary");
        assert_eq!(summary["passed"], true);
        for entry in fs::read_dir(&first).unwrap() {
            let name = entry.unwrap().file_name();
            let a = fs::read(first.join(&name)).unwrap();
            let b = fs::read(second.join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between runs");
        }
    }
}
