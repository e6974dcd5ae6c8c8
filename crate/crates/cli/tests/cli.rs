use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jdevar_core::model::{Model2Params, ModelParams};
use jdevar_core::risk::{evar_model, RiskLevel};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/frontier_model1.json")
}

fn jdevar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdevar")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"].clone()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn evar_report_states_the_level_mapping() {
    let f = fixture();
    let v = stdout_json(&jdevar(&["evar", "--params", f.to_str().unwrap(), "--weights", "0.2,0.5,0.3"]));
    assert_eq!(v["convention"]["confidence"], 0.95);
    assert!((v["convention"]["alpha"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert!(v["evar"].as_f64().unwrap() > -v["expected_return"].as_f64().unwrap());
    assert!(v["density_at_mean"].as_f64().unwrap() > 0.0);

    let csv = jdevar(&["evar", "--params", f.to_str().unwrap(), "--weights", "0.2,0.5,0.3", "--format", "csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with('#') && l.contains("alpha = 1 - confidence")));
    assert_eq!(data_rows(&text).len(), 1);
}

#[test]
fn single_asset_evar_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let p = Model2Params::new(
        DVector::from_element(1, 0.004),
        DMatrix::from_element(1, 1, 6e-4),
        0.3,
        DVector::from_element(1, -0.02),
        DMatrix::from_element(1, 1, 9e-4),
    )
    .unwrap();
    let path = dir.path().join("one.json");
    std::fs::write(&path, ModelParams::from(p.clone()).to_json_pretty().unwrap()).unwrap();
    let v = stdout_json(&jdevar(&["evar", "--params", path.to_str().unwrap(), "--weights", "1", "--alpha", "0.9"]));
    let expected = evar_model(&p, &DVector::from_element(1, 1.0), RiskLevel::from_confidence(0.9).unwrap()).unwrap();
    assert_eq!(v["evar"].as_f64().unwrap(), expected.value);
    assert_eq!(v["s_star"].as_f64().unwrap(), expected.s_star);
}

#[test]
fn ten_target_frontier_has_ten_rows_per_curve() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture();
    let out = dir.path().join("front.csv");
    let o = jdevar(&["frontier", "--params", f.to_str().unwrap(), "--targets", "0.04:0.11:10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
    for (name, col) in [("front_evar.csv", 1), ("front_stdev.csv", 2)] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header, "target_return,evar,stdev,s_star,w_1,w_2,w_3");
        let rows = data_rows(&text);
        assert_eq!(rows.len(), 10);
        let risk: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        let argmin = risk.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(argmin > 0 && argmin < 9, "{name}: {risk:?}");
        for r in &rows {
            let sum: f64 = r[4..].iter().map(|w| w.parse::<f64>().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn frontier_json_carries_both_curves() {
    let f = fixture();
    let v = stdout_json(&jdevar(&["frontier", "--params", f.to_str().unwrap(), "--format", "json", "--jobs", "2"]));
    for kind in ["evar", "stdev"] {
        let entries = v[kind].as_array().unwrap();
        assert_eq!(entries.len(), 10);
        assert!(entries.iter().all(|e| e["point"]["evar_value"].is_f64() && e["error"].is_null()));
    }
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let f = fixture();
    let f = f.to_str().unwrap();
    let a = jdevar(&["frontier", "--params", f, "--jobs", "1"]);
    let b = jdevar(&["frontier", "--params", f, "--jobs", "4"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let s1 = jdevar(&["simulate", "--params", f, "--count", "500", "--seed", "9"]);
    let s2 = jdevar(&["simulate", "--params", f, "--count", "500", "--seed", "9"]);
    assert_eq!(s1.stdout, s2.stdout);
}

#[test]
fn simulate_fit_frontier_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture();
    let returns = dir.path().join("returns.csv");
    let fitted = dir.path().join("fitted.json");
    let front = dir.path().join("front.json");
    let r = |p: &PathBuf| p.to_str().unwrap().to_string();

    let o = jdevar(&["simulate", "--params", &r(&f), "--count", "1500", "--seed", "3", "--out", &r(&returns)]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&returns).unwrap().starts_with("date,r_asset_1,r_asset_2,r_asset_3\n"));

    for model in ["1", "2"] {
        let o = jdevar(&["fit", "--model", model, "--returns", &r(&returns), "--starts", "4", "--seed", "1", "--out", &r(&fitted)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = jdevar(&["frontier", "--params", &r(&fitted), "--model", model, "--format", "json", "--out", &r(&front)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&front).unwrap()).unwrap();
        for kind in ["evar", "stdev"] {
            for e in v[kind].as_array().unwrap() {
                let p = &e["point"];
                for key in ["evar_value", "stdev_value", "s_star", "target_return"] {
                    assert!(p[key].as_f64().is_some_and(f64::is_finite), "model {model} {kind} {key}: {e}");
                }
            }
        }
    }
}

#[test]
fn fit_reads_price_files() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    let mut text = String::from("date,A,B\n");
    let mut state = [100.0f64, 50.0];
    let draws = jdevar(&["simulate", "--params", fixture().to_str().unwrap(), "--count", "60", "--seed", "5"]);
    for (k, line) in String::from_utf8(draws.stdout).unwrap().lines().skip(1).enumerate() {
        let r: Vec<f64> = line.split(',').skip(1).take(2).map(|v| v.parse().unwrap()).collect();
        state[0] *= r[0].exp();
        state[1] *= r[1].exp();
        text += &format!("2020-{:02}-{:02},{:.6},{:.6}\n", 1 + k / 28, 1 + k % 28, state[0], state[1]);
    }
    std::fs::write(&prices, text).unwrap();
    let v = stdout_json(&jdevar(&["fit", "--model", "2", "--prices", prices.to_str().unwrap(), "--starts", "2"]));
    assert_eq!(v["n_obs"], 59);
    assert!(v["Q"].is_array());
}

#[test]
fn kkt_check_at_a_frontier_point_is_clean() {
    let f = fixture();
    let front = stdout_json(&jdevar(&["frontier", "--params", f.to_str().unwrap(), "--risk", "evar", "--format", "json"]));
    let p = &front["evar"][4]["point"];
    let weights: Vec<String> = p["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap().to_string()).collect();
    let s = p["s_star"].as_f64().unwrap().to_string();
    let target = p["target_return"].as_f64().unwrap().to_string();
    let v = stdout_json(&jdevar(&[
        "kkt-check", "--params", f.to_str().unwrap(), "--weights", &weights.join(","), "--s", &s, "--target", &target,
    ]));
    assert_eq!(v["multipliers_source"], "recovered");
    assert!(v["max_violation"].as_f64().unwrap() <= 1e-6, "{v}");

    // a visibly suboptimal point keeps a large stationarity residual
    let v = stdout_json(&jdevar(&["kkt-check", "--params", f.to_str().unwrap(), "--weights", "0.9,0.05,0.05", "--s", "5"]));
    assert!(v["report"]["stationarity_inf_norm"].as_f64().unwrap() > 1e-3);
}

#[test]
fn failures_exit_with_typed_codes_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture();
    let f = f.to_str().unwrap();
    let out = dir.path().join("never.csv");
    let o = out.to_str().unwrap();

    let cases: Vec<(Vec<&str>, i32, &str)> = vec![
        (vec!["frontier", "--params", f, "--alpha", "1.5", "--out", o], 2, "INVALID_PARAMETER"),
        (vec!["frontier", "--params", f, "--targets", "0.0:0.2:5", "--out", o], 2, "INFEASIBLE_TARGET"),
        (vec!["frontier", "--params", f, "--targets", "0.05:0.06", "--out", o], 2, "INVALID_PARAMETER"),
        (vec!["frontier", "--params", f, "--model", "2", "--out", o], 2, "MODEL_MISMATCH"),
        (vec!["frontier", "--params", "/nonexistent.json", "--out", o], 3, "IO_ERROR"),
        (vec!["simulate", "--params", f, "--count", "0", "--out", o], 2, "INVALID_PARAMETER"),
        (vec!["evar", "--params", f, "--weights", "0.5,0.5,0.5", "--out", o], 2, "INVALID_PARAMETER"),
        (vec!["evar", "--params", f, "--weights", "1,0,0", "--tail-mass", "2", "--out", o], 2, "INVALID_PARAMETER"),
        (vec!["kkt-check", "--params", f, "--weights", "1,0,0", "--s", "-1", "--out", o], 2, "INVALID_PARAMETER"),
        (vec!["fit", "--model", "1", "--out", o], 2, "MISSING_INPUT"),
        (vec!["fit", "--model", "3", "--out", o], 2, "USAGE"),
        (vec!["evar", "--out", o], 2, "USAGE"),
    ];
    for (args, code, kind) in cases {
        let r = jdevar(&args);
        assert_eq!(r.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
        let e = stderr_error(&r);
        assert_eq!(e["kind"], kind, "{args:?}");
        assert_eq!(e["command"], args[0]);
        assert!(!out.exists(), "{args:?} wrote output");
    }

    let bad_prices = dir.path().join("bad.csv");
    std::fs::write(&bad_prices, "date,A\n2020-01-03,10\n2020-01-10,-1\n2020-01-17,12\n").unwrap();
    let r = jdevar(&["fit", "--model", "1", "--prices", bad_prices.to_str().unwrap(), "--out", o]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(stderr_error(&r)["kind"], "NON_POSITIVE_PRICE");

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "date,r_a,r_b\n1,0.01,0.02\n2,0.0,0.01\n").unwrap();
    let r = jdevar(&["fit", "--model", "2", "--returns", short.to_str().unwrap(), "--out", o]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(stderr_error(&r)["kind"], "TOO_FEW_ROWS");
    assert!(!out.exists());
}

#[test]
fn help_exits_cleanly() {
    let o = jdevar(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("frontier"));
}
