use std::process::{Command, Output};

use bw_isolas::dispersion::ModelSetup;
use bw_isolas::ffh::{spectrum, SpectrumSlice};
use bw_isolas::stokes::stokes_coefficients;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bw-isolas"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn collision_json_fields() {
    let o = run(&["collision", "--alpha", "1", "--p", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let row = &v["data"][0];
    for key in ["alpha", "p", "k", "mu0", "n", "m", "lambda0_im", "residual"] {
        assert!(!row[key].is_null(), "missing {key}");
    }
    assert!((row["mu0"].as_f64().unwrap() + 0.26091).abs() < 1e-5);
    assert_eq!(v["meta"]["kind"], "collision");
}

#[test]
fn ladder_csv_rows() {
    let o = run(&["collision", "--alpha", "0.5", "--ladder", "5", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "alpha,p,k,mu0,n,m,lambda0_im,residual,tie");
    assert_eq!(data.len(), 1 + 8);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["collision", "--alpha", "1", "--p", "1"]).status.code(), Some(2));
    assert_eq!(run(&["collision", "--alpha", "-1", "--p", "2"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["spectrum", "--alpha", "1"]).status.code(), Some(2));
    assert_eq!(
        run(&["isola", "--p", "4", "--alpha", "1", "--epsilon", "1e-3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["--modes", "4", "spectrum", "--alpha", "1", "--epsilon", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn spectrum_output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &std::path::Path| {
        vec![
            "--modes".to_string(),
            "10".into(),
            "--out".into(),
            p.display().to_string(),
            "spectrum".into(),
            "--alpha".into(),
            "1".into(),
            "--epsilon".into(),
            "1e-3".into(),
            "--mu-steps".into(),
            "7".into(),
        ]
    };
    for p in [&a, &b] {
        let o = Command::new(env!("CARGO_BIN_EXE_bw-isolas"))
            .args(args(p))
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    assert!(text.ends_with('\n'));
    assert!(text.contains("# modes=10\n"));
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 7 * 42);
}

#[test]
fn spectrum_json_round_trip() {
    let o = run(&[
        "--modes",
        "9",
        "--format",
        "json",
        "spectrum",
        "--alpha",
        "2",
        "--epsilon",
        "1e-3",
        "--mu-min",
        "0.1",
        "--mu-max",
        "0.1",
        "--mu-steps",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let slices: Vec<SpectrumSlice> = serde_json::from_value(v["data"].clone()).unwrap();
    let series = stokes_coefficients(&ModelSetup::new(2.0).unwrap()).unwrap();
    let direct = spectrum(&series, 1e-3, 0.1, 9).unwrap();
    assert_eq!(slices, vec![direct]);
}

#[test]
fn stokes_coefficients_dump() {
    let o = run(&["stokes", "--alpha", "1", "--coeffs"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["data"]["N_2_0"].as_f64().unwrap() + 2.3959).abs() < 1e-4);
    assert!((v["data"]["U_1_1"].as_f64().unwrap() - 0.5 * 1f64.tanh().sqrt()).abs() < 1e-15);
}

#[test]
fn isola_both_reports_differences() {
    let o = run(&[
        "isola",
        "--method",
        "both",
        "--p",
        "2",
        "--alpha",
        "1",
        "--epsilon",
        "1e-3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["data"]["numeric"]["present"], true);
    assert!(v["meta"]["diff_endpoint_lo"].as_f64().unwrap() < 1e-10);
    let asym = run(&[
        "isola",
        "--method",
        "asymptotic",
        "--p",
        "3",
        "--alpha",
        "1",
        "--epsilon",
        "1e-3",
    ]);
    let v: Value = serde_json::from_str(&stdout(&asym)).unwrap();
    assert!(v["data"]["asymptotics"]["mu4"].is_number());
}

#[test]
fn table1_flags_regressions() {
    let o = run(&["table1"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 7);
    let header: Vec<&str> = rows[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let failing: Vec<(String, String)> = rows[1..]
        .iter()
        .map(|r| r.split(',').collect::<Vec<_>>())
        .filter(|r| r[col("numeric_pass")] == "false" || r[col("asymptotic_pass")] == "false")
        .map(|r| (r[col("alpha")].to_string(), r[col("p")].to_string()))
        .collect();
    let expected = if failing.is_empty() { 0 } else { 1 };
    assert_eq!(o.status.code(), Some(expected));
}
