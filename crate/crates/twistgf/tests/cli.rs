use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn out_dir(tag: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("cli_{tag}"));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn run(cmd: &str, scenario: &Path, out: &Path, extra: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_twistgf"))
        .arg(cmd)
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap()
}

fn report(out: &Path, file: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(file)).unwrap()).unwrap()
}

/// Writes a variant of a scenario with `edit` applied to its JSON.
fn variant(base: &str, tag: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value =
        serde_json::from_str(&std::fs::read_to_string(scenario(base)).unwrap()).unwrap();
    edit(&mut v);
    let p = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("{tag}.json"));
    std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

#[test]
fn small_rotation_has_one_critical_point() {
    let out = out_dir("small_rotation");
    assert_eq!(
        run(
            "critical-points",
            &scenario("small_rotation.json"),
            &out,
            &[]
        ),
        0
    );
    let csv = std::fs::read_to_string(out.join("critical_points.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let cells: Vec<&str> = rows[0].split(',').collect();
    assert!(cells[1].parse::<f64>().unwrap().abs() < 1e-12);
    assert_eq!(cells[2], "1");
    assert_eq!(cells[3], "-1");
    let r = report(&out, "critical-points.json");
    assert_eq!(r["status"], "ok");
    assert_eq!(r["report"]["dimension"], 4);
}

#[test]
fn reports_are_deterministic_and_carry_the_scenario_hash() {
    let (a, b) = (out_dir("det_a"), out_dir("det_b"));
    let s = scenario("double_bump.json");
    assert_eq!(run("linking-matrix", &s, &a, &[]), 0);
    assert_eq!(run("linking-matrix", &s, &b, &["--jobs", "2"]), 0);
    for f in ["linking-matrix.json", "linking_matrix.csv", "loops.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let r = report(&a, "linking-matrix.json");
    let hash = twistgf::cli::scenario_hash(&std::fs::read(&s).unwrap());
    assert_eq!(r["scenario_hash"], hash.as_str());
    assert_eq!(r["tolerances"]["flow"], 1e-10);
    assert_eq!(r["tolerances"]["newton"], 1e-9);
}

#[test]
fn one_point_braid_is_the_empty_word() {
    let s = variant("double_bump.json", "one_point", |v| {
        v["collection"] = serde_json::json!([1])
    });
    let out = out_dir("one_point");
    assert_eq!(run("braid", &s, &out, &[]), 0);
    let r = report(&out, "braid.json");
    assert_eq!(r["report"]["flow_word"], "");
    assert_eq!(r["report"]["loop_word"], "");
}

#[test]
fn validation_errors_exit_with_one() {
    let bad_version = variant("double_bump.json", "bad_version", |v| {
        v["version"] = 7.into()
    });
    let bad_window = variant("double_bump.json", "bad_window", |v| {
        v["windows"] = serde_json::json!([[-0.1, 0.2]])
    });
    let bad_tol = variant("double_bump.json", "bad_tol", |v| {
        v["tolerances"]["flow"] = (-1.0).into()
    });
    for (tag, s) in [("v", bad_version), ("w", bad_window), ("t", bad_tol)] {
        let out = out_dir(&format!("bad_{tag}"));
        assert_eq!(run("complex", &s, &out, &[]), 1);
        assert_eq!(report(&out, "error.json")["status"], "validation_error");
    }
    let out = out_dir("missing");
    assert_eq!(
        run("braid", Path::new("/nonexistent/scenario.json"), &out, &[]),
        1
    );
}

#[test]
fn broken_preconditions_exit_with_two() {
    let s = variant("double_bump.json", "small_eps", |v| {
        v["experiment"]["epsilon"] = 0.001.into()
    });
    let out = out_dir("small_eps");
    assert_eq!(run("persistence", &s, &out, &[]), 2);
    let r = report(&out, "persistence.json");
    assert_eq!(r["report"]["verdict"], "INCONCLUSIVE");
    assert_eq!(r["report"]["failed_stage"], "homotopy");
}

#[test]
fn persistence_on_the_double_bump_is_equal() {
    let out = out_dir("persistence");
    assert_eq!(
        run("persistence", &scenario("double_bump.json"), &out, &[]),
        0
    );
    let r = report(&out, "persistence.json");
    assert_eq!(r["report"]["verdict"], "EQUAL");
    assert_eq!(r["report"]["delta"], 1e-3);
}
