use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hgmrf_core::field::{FieldKind, TorusField};
use serde_json::Value;

fn hgmrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgmrf")).args(args).output().unwrap()
}

fn hgmrf_with_config(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgmrf"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn exponent_sweep_writes_the_documented_csv() {
    let o = hgmrf(&["exponent-sweep", "--snr-db", "10,-5", "--zeta-step", "0.05", "--grid", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("snr_db,zeta,K_s,grid,err_est,argmax"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    // zeta 0, 0.05, ..., 0.2 plus the appended 0.2499
    assert_eq!(rows.len(), 2 * 6);
    assert!(rows.iter().all(|r| r.len() == 6 && r[3] == "64"));
    let argmax_10: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == "10" && r[5] == "1").collect();
    assert_eq!(argmax_10.len(), 1);
    assert_eq!(argmax_10[0][1], "0");
    let argmax_m5: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == "-5" && r[5] == "1").collect();
    // on this coarse grid the interior peak lands on 0.2, above both ends
    let k = |r: &Vec<String>| r[2].parse::<f64>().unwrap();
    let m5: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == "-5").collect();
    assert_eq!(argmax_m5[0][1], "0.2");
    assert!(k(argmax_m5[0]) > k(m5[0]) && k(argmax_m5[0]) > k(m5[5]));
}

#[test]
fn negative_decibel_lists_parse_as_values() {
    let o = hgmrf(&["exponent-sweep", "--snr-db", "-3", "--zeta-step", "0.1", "--grid", "16"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().skip(1).all(|l| l.starts_with("-3,")));
}

#[test]
fn out_of_range_flag_is_a_usage_error_naming_the_field() {
    let o = hgmrf(&["exponent-sweep", "--zeta-max", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`zeta_max`"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty(), "no partial output");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = hgmrf(&["detect", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[detect]\nside = 6\ntrials = 200\nalpha = 0.2\nformat = \"csv\"\n").unwrap();
    let o = hgmrf_with_config(&cfg, &["detect"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "6");
    assert_eq!(row[1], "0.2");
    assert_eq!(row[7], "200");

    let o = hgmrf_with_config(&cfg, &["detect", "--alpha", "0.05", "--side", "4"]);
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((row[0], row[1], row[7]), ("4", "0.05", "200"));
}

#[test]
fn unknown_config_key_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[validate]\ntrails = 20\n").unwrap();
    let out = dir.path().join("report.json");
    let o = Command::new(env!("CARGO_BIN_EXE_hgmrf"))
        .arg("--config")
        .arg(&cfg)
        .args(["validate", "--output"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("trails"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn out_of_range_config_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[efficiency]\ndelta = 1.0\n").unwrap();
    let o = hgmrf_with_config(&cfg, &["efficiency"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`delta`"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_reports_the_path() {
    let o = hgmrf(&["--config", "/nonexistent/run.toml", "detect"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("/nonexistent/run.toml"));
}

#[test]
fn unwritable_output_reports_path_and_cause() {
    let o = hgmrf(&["sample", "--side", "4", "--output", "/nonexistent/dir/field.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("/nonexistent/dir/field.csv") && err.contains("No such file"), "{err}");
}

#[test]
fn validate_reports_every_criterion_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = hgmrf(&[
            "validate",
            "--sides",
            "8,16",
            "--trials",
            "100",
            "--miss-trials",
            "2000",
            "--seed",
            "3",
            "--output",
            path.to_str().unwrap(),
        ]);
        (o, fs::read(&path).unwrap())
    };
    let (o, a) = run("a.json");
    let (_, b) = run("b.json");
    assert_eq!(a, b);
    let report: Value = serde_json::from_slice(&a).unwrap();
    let names: Vec<&str> = report["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        ["normalized_llr_convergence", "finite_rate_vs_quadrature", "llr_oracle_equivalence", "miss_probability_trend"]
    );
    let passed = report["passed"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if passed { 0 } else { 1 }));
    assert_eq!(report["parameters"]["seed"], 3);
}

#[test]
fn failing_criterion_exits_with_one_after_writing_the_report() {
    // a 16-point reference grid is too coarse for the finite-rate gap at N=2,
    // so the monotone-gap criterion has to fail
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let o = hgmrf(&[
        "validate",
        "--sides",
        "2,64",
        "--trials",
        "50",
        "--zeta",
        "0.249",
        "--grid",
        "8",
        "--miss-sides",
        "4,6",
        "--miss-trials",
        "200",
        "--output",
        path.to_str().unwrap(),
    ]);
    let report: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    assert!(!report["passed"].as_bool().unwrap());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("validation failed"));
}

#[test]
fn efficiency_area_regime_emits_table_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("eta.csv");
    let verdict = dir.path().join("verdict.json");
    let o = hgmrf(&[
        "efficiency",
        "--grid",
        "32",
        "--output",
        table.to_str().unwrap(),
        "--verdict",
        verdict.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&table).unwrap();
    assert_eq!(csv.lines().next(), Some("n,r_n,zeta,K_s,I_t,E_t,eta"));
    assert_eq!(csv.lines().count(), 8);
    let v: Value = serde_json::from_str(&fs::read_to_string(&verdict).unwrap()).unwrap();
    assert_eq!(v["regime"], "area");
    assert!((v["slope"].as_f64().unwrap() + 0.5).abs() <= 0.02);
    assert_eq!(v["within_tolerance"], true);
}

#[test]
fn efficiency_density_regime_with_constant_map_grows() {
    let o = hgmrf(&["efficiency", "--regime", "density", "--grid", "32"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert_eq!(v["verdict"], "growing");
    assert_eq!(v["reference_slope"], -0.5);
}

#[test]
fn efficiency_density_regime_with_exponential_map_carries_caveat() {
    let o = hgmrf(&[
        "efficiency",
        "--regime",
        "density",
        "--map",
        "exponential",
        "--correlation-length",
        "0.05",
        "--grid",
        "64",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert!(["growing", "threshold", "vanishing"].contains(&v["verdict"].as_str().unwrap()));
    assert!(v["caveat"].as_str().unwrap().contains("conditional on the correlation map"));
}

#[test]
fn efficiency_reads_a_tabulated_map() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("map.csv");
    fs::write(&table, "r,zeta\n0.0,0.25\n0.5,0.1\n1.0,0.0\n").unwrap();
    let o = hgmrf(&[
        "efficiency",
        "--regime",
        "density",
        "--map",
        "table",
        "--table",
        table.to_str().unwrap(),
        "--n-list",
        "2,4,8",
        "--grid",
        "32",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: Vec<String> = stdout(&o).lines().skip(1).map(String::from).collect();
    // r = 1/5 lies on the first segment: zeta = 0.25 - 0.15 * 0.2 / 0.5
    let zeta: f64 = rows[0].split(',').nth(2).unwrap().parse().unwrap();
    assert!((zeta - 0.19).abs() < 1e-12);

    fs::write(&table, "r,zeta\n0.0,0.1\n1.0,0.2\n").unwrap();
    let o = hgmrf(&["efficiency", "--map", "table", "--table", table.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`table`"));
}

#[test]
fn sample_round_trips_through_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    let bin = dir.path().join("f.bin");
    let common = ["sample", "--side", "8", "--kind", "observation", "--hypothesis", "h0", "--seed", "12"];
    let o = hgmrf(&[&common[..], &["--output", csv.to_str().unwrap()]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = hgmrf(&[&common[..], &["--format", "binary", "--output", bin.to_str().unwrap()]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let from_csv = TorusField::read_csv(fs::read(&csv).unwrap().as_slice()).unwrap();
    let from_bin = TorusField::from_bytes(&fs::read(&bin).unwrap()).unwrap();
    assert_eq!(from_csv, from_bin);
    assert_eq!(from_bin.kind(), FieldKind::Observation);
    assert_eq!(from_bin.seed(), 12);
    assert_eq!(from_bin.side(), 8);
}

#[test]
fn sample_at_the_singular_limit_is_rejected() {
    let o = hgmrf(&["sample", "--zeta", "0.25"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`zeta`"));
}

#[test]
fn detect_json_report_has_the_documented_fields() {
    let o = hgmrf(&["detect", "--side", "8", "--trials", "500", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in [
        "side",
        "alpha",
        "threshold",
        "p_false_alarm",
        "p_false_alarm_ci",
        "p_miss",
        "p_miss_ci",
        "trials",
        "seed",
        "kappa",
        "zeta",
        "sigma2",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let again = hgmrf(&["detect", "--side", "8", "--trials", "500", "--seed", "4"]);
    assert_eq!(o.stdout, again.stdout);
}
