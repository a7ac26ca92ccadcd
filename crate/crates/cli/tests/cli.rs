use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const HEADER: &str = "date,symbol,broker_id,sign,shares,start_time,end_time,day_volume,exec_volume,open,high,low,close";

fn coimpact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coimpact")).args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(coimpact(&["--help"]).status.code(), Some(0));
    assert_eq!(coimpact(&["--version"]).status.code(), Some(0));
    assert_eq!(coimpact(&["curve", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let out = coimpact(&["curve", "--model", "iid-gaussian", "--n", "2", "--sigma", "0.01", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("Usage"));
    assert_eq!(coimpact(&[]).status.code(), Some(1));
    // Domain errors from the library are also exit 1.
    assert_eq!(coimpact(&["curve", "--model", "iid-gaussian", "--n", "1", "--sigma", "0.01"]).status.code(), Some(1));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_coimpact"))
        .args(["specfun-check"])
        .env("COIMPACT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
}

#[test]
fn curve_emits_monotone_closed_form_rows() {
    let out = coimpact(&[
        "curve", "--model", "iid-gaussian", "--n", "10", "--sigma", "0.008", "--phi-min", "1e-5", "--phi-max", "0.1",
        "--points", "50",
    ]);
    assert!(out.status.success());
    let stdout = text(&out.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("phi,impact"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1));
    for &(phi, impact) in &rows {
        assert_eq!(impact, coimpact::gaussian::iid_gaussian_impact(phi, 10, 0.008).unwrap());
    }
    // The manifest goes to stderr when data goes to stdout.
    let manifest: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(manifest["command"], "curve");
}

#[test]
fn other_curve_models_run() {
    for args in [
        vec!["curve", "--model", "correlated-gaussian", "--n", "5", "--sigma", "0.008", "--cphi", "0.1"],
        vec!["curve", "--model", "levy-asymptote", "--n", "5", "--alpha", "1.5", "--c", "0.001"],
    ] {
        let out = coimpact(&args);
        assert!(out.status.success(), "{}", text(&out.stderr));
        assert_eq!(text(&out.stdout).lines().count(), 51);
    }
    let missing = coimpact(&["curve", "--model", "levy-asymptote", "--n", "5", "--alpha", "1.5"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn specfun_check_passes() {
    let out = coimpact(&["specfun-check"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    assert!(stdout.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn simulate_then_analyze_recovers_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{"p_n": {"1": 0.1, "2": 0.2, "4": 0.2, "10": 0.25, "12": 0.25}, "gamma_eps": 0.4,
            "sigma": 0.01, "y_ratio": 1.0, "noise_sd": 0.5, "seed": 3, "days": 20000}"#,
    )
    .unwrap();
    let panels = dir.path().join("panels.csv");
    let out = coimpact(&["simulate", "--config", p(&config), "--out", p(&panels)]);
    assert!(out.status.success(), "{}", text(&out.stderr));

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("panels.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["gamma_eps"], 0.4);

    let out = coimpact(&["analyze", "--input", p(&panels)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let plateau = &report["gamma_eps"]["plateau"];
    let gamma = plateau["gamma"].as_f64().unwrap();
    let se = plateau["std_error"].as_f64().unwrap();
    assert!((gamma - 0.4).abs() <= 3.0 * se, "gamma {gamma} +/- {se}");
    assert!(report["impact_curve"]["global"]["bins"].as_array().unwrap().len() == 20);
}

fn record_line(end: &str, shares: u32) -> String {
    format!("2024-03-01,ABC,b1,1,{shares},10:00:00,{end},1000000,10000,10,10.5,9.8,10.2")
}

#[test]
fn ingest_reports_filter_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("records.csv");
    let rows = [record_line("10:01:00", 1000), record_line("11:00:00", 1000), record_line("11:00:00", 3500)];
    std::fs::write(&input, format!("{HEADER}\n{}\n", rows.join("\n"))).unwrap();
    let report = dir.path().join("report.json");
    let out = coimpact(&["ingest", "--input", p(&input), "--report", p(&report)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["filters"]["filter_3"], 1);
    assert_eq!(report["filters"]["filter_4"], 1);
    assert_eq!(report["filters"]["kept"], 1);
    let panels = text(&out.stdout);
    assert_eq!(panels.lines().count(), 2);
    assert!(panels.lines().nth(1).unwrap().starts_with("ABC,2024-03-01,1,0.001,"));
}

#[test]
fn ingest_of_empty_file_warns_and_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "").unwrap();
    let out = coimpact(&["ingest", "--input", p(&input)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stderr).contains("warning"));
    assert_eq!(text(&out.stdout).trim(), "symbol,date,n,net_flow,rescaled_return,phis");
}

#[test]
fn ingest_rejects_bad_header_and_names_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "date,symbol,sign\n").unwrap();
    let out = coimpact(&["ingest", "--input", p(&input)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains(HEADER));

    std::fs::write(&input, format!("{HEADER}\n{}\n2024-03-01,ABC,b1,1,oops\n", record_line("11:00:00", 10))).unwrap();
    let out = coimpact(&["ingest", "--input", p(&input)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("line 3"), "{}", text(&out.stderr));
}

#[test]
fn impact_mc_writes_file_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("mc.csv");
    let out = coimpact(&[
        "impact-mc", "--n", "1", "--sigma", "0.01", "--samples", "1000", "--points", "3", "--out", p(&out_path),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(&out_path).unwrap();
    // N = 1 is the bare square-root law with no Monte Carlo error.
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[1], v[0].sqrt());
        assert_eq!(v[2], 0.0);
    }
    assert!(dir.path().join("mc.csv.manifest.json").exists());
}
