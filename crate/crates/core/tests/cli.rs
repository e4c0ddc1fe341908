use std::path::Path;
use std::process::{Command, Output};

use altchain::cli::parse_float;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_altchain"));
    c.env_remove("ALTCHAIN_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn pmf_at_time_zero_is_a_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = run(&["pmf", "--t", "0", "--k", "3", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&out);
    assert_eq!(&header[..3], ["n", "probability", "tail_estimate"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "3");
    assert_eq!(parse_float(&rows[0][1]), Some(1.0));
    assert_eq!(parse_float(&rows[0][2]), Some(0.0));
}

#[test]
fn malformed_rate_names_the_field() {
    let o = run(&["pmf", "--alpha1", "0"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("alpha1"), "{}", stderr(&o));
}

#[test]
fn pmf_table_is_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = run(&[
        "pmf",
        "--alpha1",
        "2",
        "--alpha2",
        "1",
        "--beta1",
        "3",
        "--beta2",
        "1",
        "--t",
        "1",
        "--radius",
        "40",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("normalization defect"));
    let (header, rows) = read_csv(&out);
    assert_eq!(rows.len(), 81);
    let p = column(&header, "probability");
    let sum: f64 = rows.iter().map(|r| parse_float(&r[p]).unwrap()).sum();
    assert!((1.0 - sum).abs() <= 1e-8, "{sum}");
}

#[test]
fn non_convergence_exits_with_two_and_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = run(&[
        "pmf",
        "--alpha1",
        "2",
        "--beta1",
        "3",
        "--t",
        "3",
        "--radius",
        "3",
        "--max-terms",
        "8",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("did not converge"));
    assert!(out.exists());
}

#[test]
fn figure2_preset_emits_three_ordered_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = run(&["rate", "--preset", "figure2", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["curve", "y", "rate", "argmax_gamma", "kink_flag"]);
    let mut curves: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
    curves.dedup();
    assert_eq!(curves.len(), 3);
    assert_eq!(rows.len(), 303);
    for i in 0..101 {
        let r: Vec<f64> = (0..3)
            .map(|c| parse_float(&rows[c * 101 + i][2]).unwrap())
            .collect();
        let y = parse_float(&rows[i][1]).unwrap();
        if y.abs() < 1e-12 {
            assert!(r.iter().all(|v| v.abs() < 1e-12));
        } else {
            assert!(r[0] > r[1] && r[1] > r[2], "y={y}: {r:?}");
        }
    }
}

#[test]
fn base_rate_vanishes_at_the_drift() {
    // (2, 1, 2, 1): the drift is 2 (4 - 1) / 6 = 1
    let o = run(&[
        "rate", "--alpha1", "2", "--alpha2", "1", "--beta1", "2", "--beta2", "1", "--y-min", "1",
        "--y-max", "1",
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(parse_float(row[2]).unwrap().abs() <= 1e-10, "{text}");
}

#[test]
fn tempered_rate_needs_positive_mu() {
    let o = run(&[
        "rate",
        "--clock",
        "tempered-stable",
        "--nu",
        "0.5",
        "--mu",
        "0",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mu > 0"), "{}", stderr(&o));
}

#[test]
fn fractional_moderate_deviations_are_refused() {
    let o = run(&[
        "rate",
        "--moderate",
        "--clock",
        "inverse-stable",
        "--nu",
        "0.5",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("not interesting"));
}

#[test]
fn validate_is_deterministic_and_passes() {
    let a = run(&["validate", "--alpha1", "2", "--beta1", "3", "--seed", "42"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    let b = bin()
        .args(["validate", "--alpha1", "2", "--beta1", "3", "--seed", "42"])
        .env("ALTCHAIN_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",pass")), "{text}");
}

#[test]
fn underpowered_validation_does_not_fail_hard() {
    let o = run(&["validate", "--paths", "10", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["underpowered"], Value::Bool(true));
    let rows = v["rows"].as_array().unwrap();
    assert!(rows.iter().any(|r| r["wide_ci"] == Value::Bool(true)));
    assert!(rows.iter().all(|r| r["status"] != "fail"));
}

#[test]
fn corrupted_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[rates\nalpha1 = 2\n").unwrap();
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    std::fs::write(&cfg, "[rates]\nalpha1 = -2.0\n").unwrap();
    let o = run(&["pmf", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("alpha1"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "format = \"json\"\n[rates]\nalpha1 = 2.0\nbeta1 = 3.0\n[time_change]\nkind = \"inverse-stable\"\nnu = 0.5\n\
         [pgf]\nt = 1.0\nz = [0.5, 1.0]\n",
    )
    .unwrap();
    let o = run(&["pgf", "--config", cfg.to_str().unwrap(), "--nu", "0.7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["time_change"]["nu"], 0.7);
    assert_eq!(v["meta"]["rates"][0], 2.0);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["rows"][1]["value"], 1.0);
}

#[test]
fn csv_and_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("g.csv");
    let json_path = dir.path().join("g.json");
    let common = [
        "pgf",
        "--clock",
        "tempered-stable",
        "--nu",
        "0.5",
        "--mu",
        "1",
        "--alpha1",
        "2",
        "--z",
        "0.3,1,1.7,50",
    ];
    let o = run(&[&common[..], &["-o", csv_path.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&[
        &common[..],
        &["--format", "json", "-o", json_path.to_str().unwrap()],
    ]
    .concat());
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&csv_path);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let jrows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), jrows.len());
    for (c, j) in rows.iter().zip(jrows) {
        let value = parse_float(&c[1]).unwrap();
        assert_eq!(parse_float(&c[0]).unwrap(), j["z"].as_f64().unwrap());
        if value.is_finite() {
            assert_eq!(value.to_bits(), j["value"].as_f64().unwrap().to_bits());
        } else {
            assert_eq!(c[1], "inf");
            assert!(j["value"].is_null());
            assert_eq!(j["value_nonfinite"], "inf");
        }
    }
    assert_eq!(rows[3][1], "inf");
}

#[test]
fn moments_and_help() {
    let o = run(&["moments", "--alpha1", "2", "--beta1", "3", "--t", "1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("mean,") && text.contains("variance,"));
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(
        code(&run(&[
            "moments",
            "--clock",
            "inverse-stable",
            "--nu",
            "0.5"
        ])),
        1
    );
}
