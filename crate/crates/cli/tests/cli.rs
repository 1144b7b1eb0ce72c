use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use patternlab_cli::config::{parse, Grid};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_patternlab"))
}

fn run_config(dir: &Path, name: &str, json: &str, extra: &[&str]) -> Output {
    let path = dir.join(format!("{}.json", name));
    fs::write(&path, json).unwrap();
    let mut cmd = bin();
    cmd.arg("run").arg(&path).arg("--out").arg(dir.join("out"));
    cmd.args(extra);
    cmd.output().unwrap()
}

fn estimates(csv: &str) -> Vec<String> {
    csv.lines().filter(|l| !l.starts_with('#')).map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

const SMALL: &str = r#"{
  "experiment": "recovery_curve",
  "model": { "beta0": [1.0, 0.0, -1.0], "covariance": { "kind": "equicorrelated", "rho": 0.3 }, "sigma": 1.0 },
  "penalties": [{ "family": "lasso" }, { "family": "slope", "lambda": [3, 2, 1] }],
  "alpha_grid": { "start": 0.5, "stop": 1.5, "count": 3 },
  "n_grid": [100],
  "reps": 200,
  "seed": 9
}"#;

#[test]
fn range_grid_expands_linearly() {
    assert_eq!(Grid::Range { start: 0.0, stop: 1.0, count: 5 }.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(Grid::Range { start: 2.0, stop: 2.0, count: 1 }.values(), vec![2.0]);
    let l = parse(SMALL).unwrap();
    assert_eq!(l.config.alpha_grid.unwrap().values(), vec![0.5, 1.0, 1.5]);
}

#[test]
fn invalid_configs_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("decreasing", SMALL.replace("\"start\": 0.5, \"stop\": 1.5", "\"start\": 1.5, \"stop\": 0.5"), "line 5"),
        ("few_reps", SMALL.replace("\"reps\": 200", "\"reps\": 50"), "line 7"),
        ("family", SMALL.replace("\"family\": \"lasso\"", "\"family\": \"elastic\""), "line 4"),
        ("dims", SMALL.replace("[3, 2, 1]", "[3, 2]"), "line 4"),
    ];
    for (name, json, line) in cases {
        let out = run_config(dir.path(), name, &json, &[]);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "{}: {}", name, err);
        assert!(err.contains(line), "{}: {}", name, err);
    }
}

#[test]
fn rerun_and_thread_count_give_identical_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = vec![];
    for threads in ["1", "4", "4"] {
        let out = run_config(dir.path(), "small", SMALL, &["--threads", threads]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        seen.push(estimates(&fs::read_to_string(dir.path().join("out/small.csv")).unwrap()));
    }
    assert_eq!(seen[0], seen[1]);
    assert_eq!(seen[1], seen[2]);
    // 2 penalties x 3 alphas x (direct, closed form, one finite-n row)
    assert_eq!(seen[0].len(), 1 + 18);
}

#[test]
fn csv_layout_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), "small", SMALL, &[]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("out/small.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    assert_eq!(lines.next().unwrap(), "experiment,penalty,grid1,grid2,estimate,se,reps,seed,method,ms");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], &["recovery_curve", "lasso", "0.5"]);
    assert_eq!(row[7], "9");
    let man: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/small.manifest.json")).unwrap()).unwrap();
    assert_eq!(man["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(man["seeds"], serde_json::json!([9]));
    assert_eq!(man["rows"], 18);
    assert_eq!(man["config"]["reps"], 200);
    assert_eq!(man["nonconverged"], 0);
}

#[test]
fn phase_transition_rows_cover_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{
      "experiment": "phase_transition",
      "model": { "beta0": [1.0, 0.0], "sigma": 0.2 },
      "penalties": [{ "family": "slope", "lambda": [3.0, 2.0] }],
      "rho_grid": [0.5, 0.8],
      "alpha_grid": [1.0, 3.0],
      "method": "closed_form",
      "reps": 2000
    }"#;
    let out = run_config(dir.path(), "pt", json, &[]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("out/pt.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(2).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 4);
    let est = |rho: &str, a: &str| rows.iter().find(|r| r[2] == rho && r[3] == a).unwrap()[4].parse::<f64>().unwrap();
    assert!(est("0.5", "3") > 0.95);
    assert!(est("0.8", "3") < 0.6);
}

fn check_output(json: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, json).unwrap();
    let out = bin().arg("check").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn check_reports_fused_failure_and_slope_success() {
    let fused = check_output(
        r#"{ "experiment": "irrep_report", "model": { "beta0": [1, 2, 2, 3], "sigma": 1 },
             "penalties": [{ "family": "fused_lasso", "weights": [1, 1, 1] }] }"#,
    );
    assert!(fused.contains("fails, margin 0"), "{}", fused);
    assert!(fused.contains("invalid: concavity"), "{}", fused);
    let concave = check_output(
        r#"{ "experiment": "irrep_report", "model": { "beta0": [1, 2, 2, 3], "sigma": 1 },
             "penalties": [{ "family": "concavified_fused", "nu": 0.8, "kappa": 0.04, "sparsity": 2.0 }] }"#,
    );
    assert!(concave.contains("tuning valid"), "{}", concave);
    let slope = check_output(
        r#"{ "experiment": "irrep_report",
             "model": { "beta0": [1, 0], "covariance": { "kind": "equicorrelated", "rho": 0.5 }, "sigma": 1 },
             "penalties": [{ "family": "slope", "lambda": [3, 2] }], "candidates": [[1, 0], [1, 1]] }"#,
    );
    assert!(slope.contains("irrepresentability holds"), "{}", slope);
    assert!(slope.contains("candidate (1,0) attainable"), "{}", slope);
    assert!(slope.contains("candidate (1,1) not attainable"), "{}", slope);
}

#[test]
fn quick_validation_passes() {
    let out = bin().args(["validate", "--quick"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{}", text);
    assert!(text.contains("0 failed"));
    assert!(!text.contains("[FAIL]"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            parse(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {}", p.display(), e));
            n += 1;
        }
    }
    assert!(n >= 5);
}
