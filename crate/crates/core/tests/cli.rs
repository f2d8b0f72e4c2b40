mod common;

use std::path::PathBuf;
use std::process::Command;

use ep_lab::cli::{run_cli, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["ep-lab"];
    full.extend_from_slice(args);
    let code = run_cli(full, None, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn pmf_golden_files() {
    for (args, file) in [
        (["--alpha", "0.5", "--lambda", "1", "--n", "5"], "pmf_a0.5_l1_n5.csv"),
        (["--alpha", "0", "--lambda", "1", "--n", "2"], "pmf_a0_l1_n2.csv"),
    ] {
        let mut a = vec!["pmf"];
        a.extend_from_slice(&args);
        let (code, out, _) = run(&a);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out, golden(file), "{file}");
    }
}

#[test]
fn pmf_golden_matches_enumeration() {
    let rows = csv_rows(&golden("pmf_a0.5_l1_n5.csv"));
    let brute = common::brute_force_kn(0.5, 5.0, 5);
    for (row, want) in rows.iter().zip(&brute) {
        let p: f64 = row[1].parse().unwrap();
        let lp: f64 = row[2].parse().unwrap();
        assert!((p - want).abs() < 1e-15);
        assert!((lp - want.ln()).abs() < 1e-13);
    }
    let rows = csv_rows(&golden("pmf_a0_l1_n2.csv"));
    assert_eq!(rows[0][0], "1");
    assert!((rows[0][1].parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((rows[1][1].parse::<f64>().unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn pmf_header_and_normalization() {
    let (code, out, _) = run(&["pmf", "--alpha", "0.3", "--lambda", "2", "--n", "700"]);
    assert_eq!(code, EXIT_OK);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("# ep-lab pmf"));
    let cfg: serde_json::Value = serde_json::from_str(lines.next().unwrap().trim_start_matches("# config: ")).unwrap();
    assert_eq!(cfg["n"], 700);
    assert_eq!(lines.next(), Some("k,prob,log_prob"));
    let total: f64 = csv_rows(&out).iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn pmf_json_format() {
    let (code, out, _) = run(&["pmf", "--alpha", "0.5", "--lambda", "1", "--n", "4", "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pmf"].as_array().unwrap().len(), 4);
    assert_eq!(v["config"]["theta"], 4.0);
}

#[test]
fn constants_golden_files() {
    for (alpha, file) in [("0.5", "constants_a0.5_l1.json"), ("0", "constants_a0_l1.json")] {
        let (code, out, _) = run(&["constants", "--alpha", alpha, "--lambda", "1"]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out, golden(file));
    }
}

#[test]
fn constants_golden_values() {
    let v: serde_json::Value = serde_json::from_str(&golden("constants_a0.5_l1.json")).unwrap();
    let r2 = 2f64.sqrt();
    let close = |key: &str, want: f64| assert!((v[key].as_f64().unwrap() - want).abs() < 1e-13, "{key}");
    close("m", 2.0 * (r2 - 1.0));
    close("s2", 2.0 * (1.5 - r2));
    close("z0", 2.0 * r2);
    close("Sigma2", 3.0);
    close("tau0", r2);
    close("mu0", 2.0 * r2 - 2.0);
    assert!(v["coherence_residuals"]["mean"].as_f64().unwrap().abs() <= 1e-10);
    assert!(v["coherence_residuals"]["variance"].as_f64().unwrap().abs() <= 1e-10);

    let v: serde_json::Value = serde_json::from_str(&golden("constants_a0_l1.json")).unwrap();
    assert!((v["m"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-15);
    assert!((v["s2"].as_f64().unwrap() - (2f64.ln() - 0.5)).abs() < 1e-15);
    for key in ["z0", "Sigma2", "tau0", "mu0", "sigma2_0", "mu_prime0"] {
        assert!(v[key].is_null(), "{key}");
    }
}

#[test]
fn sample_crp_two_items_mean() {
    let (code, out, _) = run(&["sample", "--route", "crp", "--alpha", "0", "--lambda", "1", "--n", "2", "--draws", "1000000", "--seed", "5"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().nth(1).unwrap().contains("\"seed\":5"));
    let ks: Vec<f64> = csv_rows(&out).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(ks.len(), 1_000_000);
    let mean = ks.iter().sum::<f64>() / ks.len() as f64;
    assert!((mean - 5.0 / 3.0).abs() <= 3.0 * (2.0 / 9.0 / 1e6f64).sqrt());
}

#[test]
fn sample_is_reproducible() {
    let args = ["sample", "--route", "stick", "--alpha", "0.4", "--lambda", "1", "--n", "80", "--draws", "2000", "--seed", "3"];
    let a = run(&args).1;
    assert_eq!(a, run(&args).1);
    let mut other = args;
    other[12] = "4";
    assert_ne!(a, run(&other).1);
}

#[test]
fn usage_errors_exit_two() {
    let cases: [&[&str]; 6] = [
        &["sample", "--route", "bernoulli", "--alpha", "0.5", "--lambda", "1", "--n", "10", "--draws", "5"],
        &["pmf", "--alpha", "0.5", "--lambda", "1"],
        &["pmf", "--alpha", "1.5", "--lambda", "1", "--n", "5"],
        &["pmf", "--alpha", "0.5", "--lambda", "1", "--n", "5", "--bogus"],
        &["sample", "--route", "gibbs", "--alpha", "0", "--lambda", "1", "--n", "5", "--draws", "5"],
        &["frobnicate"],
    ];
    for args in cases {
        let (code, _, err) = run(args);
        assert_eq!(code, EXIT_USAGE, "{args:?}");
        assert!(!err.is_empty());
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha": 0.5, "lambda": 1.0, "n": 5}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let (code, out, _) = run(&["pmf", "--config", c]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, golden("pmf_a0.5_l1_n5.csv"));
    let (_, out, _) = run(&["pmf", "--config", c, "--n", "7"]);
    assert_eq!(csv_rows(&out).len(), 7);

    std::fs::write(&cfg, r#"{"alpha": 0.5, "nonsense": 1}"#).unwrap();
    assert_eq!(run(&["pmf", "--config", c]).0, EXIT_USAGE);
    assert_eq!(run(&["pmf", "--config", "/nonexistent/x.json"]).0, EXIT_USAGE);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pmf.csv");
    let (code, out, _) = run(&["pmf", "--alpha", "0.5", "--lambda", "1", "--n", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    assert_eq!(std::fs::read_to_string(path).unwrap(), golden("pmf_a0.5_l1_n5.csv"));
}

#[test]
fn gfc_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("t.gfc");
    let args = ["pmf", "--alpha", "0.35", "--lambda", "1", "--n", "400", "--gfc-cache", cache.to_str().unwrap()];
    let first = run(&args).1;
    assert!(cache.exists());
    assert_eq!(first, run(&args).1);
    let plain = run(&["pmf", "--alpha", "0.35", "--lambda", "1", "--n", "400"]).1;
    for (a, b) in csv_rows(&first).iter().zip(csv_rows(&plain)) {
        let (x, y): (f64, f64) = (a[1].parse().unwrap(), b[1].parse().unwrap());
        assert!((x - y).abs() <= 1e-10 * y.max(1e-300) + 1e-300);
    }
}

#[test]
fn verify_exit_codes() {
    let (code, out, _) = run(&["verify", "--suite", "coherence"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["reports"].as_array().unwrap().len(), 90);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    std::fs::write(&cfg, r#"{"verify": {"tolerances": {"clt_distance": 1e-6}}}"#).unwrap();
    let (code, out, _) = run(&["verify", "--suite", "clt", "--config", cfg.to_str().unwrap(), "--alpha", "0", "--lambda", "1", "--n-min", "128", "--n-max", "512", "--draws", "1000"]);
    assert_eq!(code, EXIT_CHECK_FAILED);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["reports"][0]["passed"], false);
}

#[test]
fn verify_csv_summary() {
    let (code, out, _) = run(&["verify", "--suite", "moments4", "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().any(|l| l.starts_with("experiment,label")));
    assert!(csv_rows(&out).iter().all(|r| r.iter().any(|c| c == "true")));
}

#[test]
fn curve_is_monotone_in_tau() {
    let (code, out, _) = run(&["curve", "--alpha", "0.5", "--lambda", "1", "--points", "40"]);
    assert_eq!(code, EXIT_OK);
    let taus: Vec<f64> = csv_rows(&out).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(taus.len(), 40);
    assert!(taus.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn binary_exit_codes_and_threads() {
    let bin = env!("CARGO_BIN_EXE_ep-lab");
    let args = ["sample", "--route", "crp", "--alpha", "0.5", "--lambda", "1", "--n", "100", "--draws", "3000", "--seed", "1"];
    let one = Command::new(bin).args(args).env("EP_LAB_THREADS", "1").output().unwrap();
    let four = Command::new(bin).args(args).env("EP_LAB_THREADS", "4").output().unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let bad = Command::new(bin).args(args).env("EP_LAB_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let usage = Command::new(bin).args(["sample", "--route", "bernoulli", "--alpha", "0.2", "--lambda", "1", "--n", "3", "--draws", "1"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
