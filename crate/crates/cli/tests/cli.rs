use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ergolab-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergolab")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn khintchine_reports_are_deterministic() {
    let dir = scratch("khintchine");
    let cfg = write_config(
        &dir,
        r#"{
            "experiment": "khintchine",
            "seed": 7,
            "params": {
                "system": {"type": "cyclic", "n": 5},
                "a_set": [0, 1],
                "a": 1,
                "b": 2,
                "epsilon": "1/100"
            }
        }"#,
    );
    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    for out in [&out1, &out2] {
        let res = run(&["run", &path_str(&cfg), "--out", &path_str(out)]);
        assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }
    for name in ["khintchine_summary.json", "khintchine_correlations.csv", "khintchine_plot.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let corr = std::fs::read_to_string(out1.join("khintchine_correlations.csv")).unwrap();
    assert_eq!(corr.trim_end().lines().count(), 6, "header plus one row per group element");
    assert!(corr.starts_with("g,correlation,good\n"));
    let summary = std::fs::read_to_string(out1.join("khintchine_summary.json")).unwrap();
    assert!(summary.contains("\"pass\": true"));
    assert!(summary.contains("\"config_sha256\""));
    assert!(summary.contains("\"version\""));
}

#[test]
fn limit_formula_zero_tolerance_fails_with_reports() {
    let dir = scratch("limit-formula");
    let cfg = write_config(
        &dir,
        r#"{
            "experiment": "limit-formula",
            "seed": 1,
            "params": {
                "model": "skew",
                "pattern": [1],
                "observables": [[1, 0]],
                "mc_samples": 20000
            }
        }"#,
    );
    let out = dir.join("out");
    let res = run(&["run", &path_str(&cfg), "--out", &path_str(&out), "--tolerance", "0.0"]);
    assert_eq!(res.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let summary = std::fs::read_to_string(out.join("limit_formula_summary.json")).unwrap();
    assert!(summary.contains("\"pass\": false"), "reports are still written on failure");
    assert!(summary.contains("\"equal\": true"), "the symbolic sides agree either way");
}

#[test]
fn invalid_json_writes_nothing() {
    let dir = scratch("badjson");
    let cfg = write_config(&dir, "{ this is not json");
    let out = dir.join("out");
    let res = run(&["run", &path_str(&cfg), "--out", &path_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists(), "config errors must not create the output directory");
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("config error at /"), "stderr: {stderr}");
}

#[test]
fn unknown_experiment_points_at_the_field() {
    let dir = scratch("unknown");
    let cfg = write_config(&dir, r#"{"experiment": "frobnicate", "params": {}}"#);
    let out = dir.join("out");
    let res = run(&["run", &path_str(&cfg), "--out", &path_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("/experiment"), "stderr: {stderr}");
}

#[test]
fn max_n_caps_system_size() {
    let dir = scratch("maxn");
    let cfg = write_config(
        &dir,
        r#"{"experiment": "counterexample", "params": {"d": 3}}"#,
    );
    let out = dir.join("out");
    let res = run(&["run", &path_str(&cfg), "--out", &path_str(&out), "--max-N", "16"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("--max-N"), "stderr: {stderr}");
}

#[test]
fn counterexample_passes() {
    let dir = scratch("counterexample");
    let cfg = write_config(&dir, r#"{"experiment": "counterexample", "params": {"d": 2}}"#);
    let out = dir.join("out");
    let res = run(&["run", &path_str(&cfg), "--out", &path_str(&out)]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("counterexample: PASS"), "stdout: {stdout}");
    for name in [
        "counterexample_summary.json",
        "counterexample_pointwise.csv",
        "counterexample_plot.csv",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
}

#[test]
fn remaining_experiments_pass_on_small_configs() {
    let cases: &[(&str, &str)] = &[
        (
            "seminorms",
            r#"{
                "experiment": "seminorms",
                "seed": 3,
                "params": {
                    "system": {"type": "cyclic", "n": 6},
                    "k": 2,
                    "random_observables": 2
                }
            }"#,
        ),
        ("cl-group", r#"{"experiment": "cl-group", "params": {"d": 2}}"#),
        (
            "tower",
            r#"{
                "experiment": "tower",
                "params": {
                    "system": {"type": "cyclic", "n": 2, "acting": "free"},
                    "depth": 2,
                    "roots": [2]
                }
            }"#,
        ),
        ("identity-b7", r#"{"experiment": "identity-b7", "params": {"n": 7, "a": 1, "b": 2}}"#),
        (
            "vdc",
            r#"{
                "experiment": "vdc",
                "seed": 11,
                "params": {"families": 3, "dim": 2, "radii": [4, 8], "m_radius": 3}
            }"#,
        ),
        (
            "characteristic",
            r#"{
                "experiment": "characteristic",
                "seed": 5,
                "params": {
                    "system": {"type": "cyclic", "n": 5},
                    "a": 1,
                    "b": 2,
                    "random_observables": 1,
                    "radii": [2, 4]
                }
            }"#,
        ),
    ];
    for (name, text) in cases {
        let dir = scratch(&format!("smoke-{name}"));
        let cfg = write_config(&dir, text);
        let out = dir.join("out");
        let res = run(&["run", &path_str(&cfg), "--out", &path_str(&out)]);
        assert_eq!(
            res.status.code(),
            Some(0),
            "{name} stderr: {}",
            String::from_utf8_lossy(&res.stderr)
        );
        let stem = name.replace('-', "_");
        assert!(out.join(format!("{stem}_summary.json")).exists(), "{name} summary missing");
    }
}

#[test]
fn carry_fiber_needs_the_free_action() {
    let dir = scratch("carry");
    let cfg = write_config(
        &dir,
        r#"{
            "experiment": "seminorms",
            "params": {
                "system": {"type": "cyclic", "n": 2, "carry_fiber": 2},
                "k": 2,
                "random_observables": 1
            }
        }"#,
    );
    let out = dir.join("out");
    let res = run(&["run", &path_str(&cfg), "--out", &path_str(&out)]);
    assert_eq!(res.status.code(), Some(1), "self-acting carry winds around the fiber");
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("carry_fiber"), "stderr: {stderr}");

    let cfg2 = write_config(
        &dir,
        r#"{
            "experiment": "seminorms",
            "seed": 2,
            "params": {
                "system": {"type": "cyclic", "n": 2, "acting": "free", "carry_fiber": 2},
                "k": 2,
                "random_observables": 1
            }
        }"#,
    );
    let out2 = dir.join("out2");
    let res = run(&["run", &path_str(&cfg2), "--out", &path_str(&out2)]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn unknown_param_field_is_rejected() {
    let dir = scratch("unknown-field");
    let cfg = write_config(
        &dir,
        r#"{"experiment": "counterexample", "params": {"d": 2, "bogus": 1}}"#,
    );
    let out = dir.join("out");
    let res = run(&["run", &path_str(&cfg), "--out", &path_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("/params"), "stderr: {stderr}");
    assert!(stderr.contains("unknown field"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_one() {
    let res = run(&["run"]);
    assert_eq!(res.status.code(), Some(1), "missing argument is a usage error");
    let res = run(&["--help"]);
    assert_eq!(res.status.code(), Some(0));
}
