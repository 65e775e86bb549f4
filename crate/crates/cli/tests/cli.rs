//! End-to-end tests of the command-line interface: exit codes, config
//! validation, output determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exterior-yamabe"))
}

fn run_config(dir: &Path, name: &str, command: &str, config: &str) -> (i32, PathBuf) {
    let config_path = dir.join(format!("{name}.json"));
    fs::write(&config_path, config).unwrap();
    let out_dir = dir.join(format!("{name}_out"));
    let status = bin()
        .arg(command)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    (status.code().unwrap_or(-1), out_dir)
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir =
        std::env::temp_dir().join(format!("exterior_yamabe_cli_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn classify_flat_reports_positive() {
    let dir = temp_dir("classify");
    let (code, out) = run_config(
        &dir,
        "flat",
        "classify",
        r#"{"command":"classify","grid":{"n":3,"r_max":1000.0,"cells":256},"metric":"flat"}"#,
    );
    assert_eq!(code, 0);
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"sign\":\"positive\""), "{report}");
    assert!(out.join("metric.json").exists());
}

#[test]
fn malformed_config_exits_one() {
    let dir = temp_dir("malformed");
    // missing "n"
    let (code, out) = run_config(
        &dir,
        "missing_n",
        "classify",
        r#"{"command":"classify","grid":{"r_max":1000.0,"cells":256}}"#,
    );
    assert_eq!(code, 1);
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("error"));

    // unknown key rejected by schema validation
    let (code, _) = run_config(
        &dir,
        "unknown_key",
        "classify",
        r#"{"command":"classify","grid":{"n":3,"r_max":1000.0,"cells":256,"bogus":1}}"#,
    );
    assert_eq!(code, 1);

    // config/subcommand mismatch is a usage error
    let (code, _) = run_config(
        &dir,
        "mismatch",
        "eigen",
        r#"{"command":"classify","grid":{"n":3,"r_max":1000.0,"cells":256}}"#,
    );
    assert_eq!(code, 1);
}

#[test]
fn prescribe_exit_codes_encode_the_gate() {
    let dir = temp_dir("gate");
    let (code, _) = run_config(
        &dir,
        "well_zero",
        "prescribe",
        r#"{"command":"prescribe",
            "grid":{"n":3,"r_max":1000.0,"cells":256},
            "metric":{"well":{"r_lo":1.0,"r_hi":2.0,"depth":50.0}},
            "target":{"scalar":"zero","mean":0.0}}"#,
    );
    assert_eq!(
        code, 2,
        "negative metric with zero targets is not attainable"
    );

    let (code, out) = run_config(
        &dir,
        "flat_mms",
        "prescribe",
        r#"{"command":"prescribe",
            "grid":{"n":3,"r_max":1000.0,"cells":512},
            "metric":"flat",
            "target":{"scalar":"zero","mean":-4.0}}"#,
    );
    assert_eq!(code, 0);
    assert!(out.join("solution.csv").exists());
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"gate\":\"passed\""));
    assert!(report.contains("\"converged\":true"));
}

#[test]
fn eigen_command_writes_minimizer() {
    let dir = temp_dir("eigen");
    let (code, out) = run_config(
        &dir,
        "eigen",
        "eigen",
        r#"{"command":"eigen","grid":{"n":3,"r_max":1000.0,"cells":200},
            "metric":{"well":{"r_lo":1.0,"r_hi":2.0,"depth":50.0}},
            "params":{"delta":0.0}}"#,
    );
    assert_eq!(code, 0);
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"sign\":\"negative\""), "{report}");
    let csv = fs::read_to_string(out.join("minimizer.csv")).unwrap();
    assert!(csv.starts_with("r,u\n"));
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn sweep_is_deterministic_and_monotone() {
    let dir = temp_dir("sweep");
    let config = r#"{"command":"sweep","grid":{"n":3,"r_max":100.0,"cells":200},
        "metric":{"well":{"r_lo":1.0,"r_hi":2.0,"depth":1.0}},
        "params":{"axis":[0.0,10.0,20.0,50.0],"seed":7}}"#;
    let (code, out1) = run_config(&dir, "sweep1", "sweep", config);
    assert_eq!(code, 0);
    let (code, out2) = run_config(&dir, "sweep2", "sweep", config);
    assert_eq!(code, 0);
    let csv1 = fs::read(out1.join("sweep.csv")).unwrap();
    let csv2 = fs::read(out2.join("sweep.csv")).unwrap();
    assert_eq!(csv1, csv2, "repeated runs must be byte-identical");
    let report1 = fs::read(out1.join("report.json")).unwrap();
    let report2 = fs::read(out2.join("report.json")).unwrap();
    assert_eq!(report1, report2);

    let text = String::from_utf8(csv1).unwrap();
    let lambdas: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    for w in lambdas.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()),
            "not monotone: {w:?}"
        );
    }
    assert!(!text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(3)
        .unwrap()
        .is_empty());
}

#[test]
fn sweep_requires_axis() {
    let dir = temp_dir("sweep_axis");
    let (code, _) = run_config(
        &dir,
        "noaxis",
        "sweep",
        r#"{"command":"sweep","grid":{"n":3,"r_max":100.0,"cells":64},
            "metric":{"well":{"r_lo":1.0,"r_hi":2.0,"depth":1.0}}}"#,
    );
    assert_eq!(code, 1);
    let (code, _) = run_config(
        &dir,
        "empty",
        "sweep",
        r#"{"command":"sweep","grid":{"n":3,"r_max":100.0,"cells":64},
            "metric":{"well":{"r_lo":1.0,"r_hi":2.0,"depth":1.0}},
            "params":{"axis":[]}}"#,
    );
    assert_eq!(code, 1);
}

#[test]
fn probe_inequalities_reports_constants() {
    let dir = temp_dir("probe");
    let (code, out) = run_config(
        &dir,
        "probe",
        "probe",
        r#"{"command":"probe","grid":{"n":3,"r_max":1000.0,"cells":256},
            "params":{"samples":20,"seed":11}}"#,
    );
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("probe.csv")).unwrap();
    assert!(csv.contains("poincare_hat"));
    assert!(csv.contains("sobolev_hat"));
}

#[test]
fn yamabe_suite_csv_schema() {
    let dir = temp_dir("yamabe");
    let (code, out) = run_config(
        &dir,
        "suite",
        "yamabe",
        r#"{"command":"yamabe","grid":{"n":3,"r_max":1000.0,"cells":128},
            "metric":"flat",
            "params":{"b_list":[0.0,1.0],"r_list":[3.0],"max_iters":200,"seed":3}}"#,
    );
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("suite.csv")).unwrap();
    assert!(csv.starts_with("b,r,value_upper_bound,sign\n"));
    assert_eq!(csv.lines().count(), 3);
    for line in csv.lines().skip(1) {
        assert!(line.ends_with("positive"), "{line}");
    }
}

#[test]
fn mms_command_round_trips() {
    let dir = temp_dir("mms");
    let (code, out) = run_config(
        &dir,
        "mms",
        "mms",
        r#"{"command":"mms","grid":{"n":3,"r_max":1000.0,"cells":512},
            "metric":"flat","params":{"mms_a":-0.5}}"#,
    );
    assert_eq!(code, 0);
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    let linf: f64 = report
        .split("\"linf_error\":")
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(linf <= 0.005, "L∞ error {linf}");
    let mms_json = fs::read_to_string(out.join("mms.json")).unwrap();
    assert!(mms_json.contains("\"u_exact\""));
}

#[test]
fn inline_metric_round_trip() {
    // serialize a metric via the library writer, feed it back inline
    let dir = temp_dir("inline");
    let grid = exterior_yamabe::build_grid(3, 100.0, 64, exterior_yamabe::Spacing::Log).unwrap();
    let metric = exterior_yamabe::well_metric(&grid, 1.0, 2.0, 50.0);
    let metric_json = exterior_yamabe::io::metric_to_json(&metric);
    let config = format!(
        r#"{{"command":"classify","grid":{{"n":3,"r_max":100.0,"cells":64}},"metric":{{"inline":{metric_json}}}}}"#
    );
    let (code, out) = run_config(&dir, "inline", "classify", &config);
    assert_eq!(code, 0);
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"sign\":\"negative\""), "{report}");
}

#[test]
fn sweep_jobs_do_not_change_output() {
    let dir = temp_dir("sweep_jobs");
    let config_path = dir.join("cfg.json");
    fs::write(
        &config_path,
        r#"{"command":"sweep","grid":{"n":3,"r_max":100.0,"cells":160},
            "metric":{"well":{"r_lo":1.0,"r_hi":2.0,"depth":1.0}},
            "params":{"axis":[0.0,5.0,10.0,15.0,20.0],"seed":5}}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let out_dir = dir.join(format!("out_{jobs}"));
        let status = bin()
            .args(["sweep", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out_dir)
            .args(["--jobs", jobs])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        outputs.push(fs::read(out_dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "worker count must not change bytes");
}

#[test]
fn sweep_single_point_axis() {
    let dir = temp_dir("sweep_single");
    let (code, out) = run_config(
        &dir,
        "single",
        "sweep",
        r#"{"command":"sweep","grid":{"n":3,"r_max":100.0,"cells":128},
            "metric":{"well":{"r_lo":1.0,"r_hi":2.0,"depth":1.0}},
            "params":{"axis":[0.0]}}"#,
    );
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("value,lambda,sign,s_star"));
    let row = lines.next().unwrap();
    assert!(row.ends_with("positive,"), "{row}");
    assert!(lines.next().is_none());
}
