use std::process::Command;

use icguard::config::ScenarioConfig;
use icguard::harness::{self, RunMetrics};

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let result = harness::run_scenario(&ScenarioConfig::default(), 4).unwrap();
    harness::export_csv(&result, &path).unwrap();
    let (header, rows) = harness::read_csv(&path).unwrap();
    assert_eq!(header, harness::csv_header());
    assert_eq!(rows.len(), 10001);
    let expected = harness::csv_rows(&result);
    for (a, b) in rows.iter().zip(&expected) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    assert!(rows.iter().all(|r| r[26] == 0.0 && r[27] == 0.0));
}

#[test]
fn export_reports_path_on_failure() {
    let result = harness::run_scenario(&ScenarioConfig { duration: 0.1, ..Default::default() }, 0).unwrap();
    let bad = std::path::Path::new("/nonexistent-dir/run.csv");
    let err = harness::export_csv(&result, bad).unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/run.csv"));
}

#[test]
fn single_run_sweep_matches_run() {
    let cfg = ScenarioConfig::attacked();
    let summary = harness::monte_carlo(&cfg, 1, 17).unwrap();
    let single = RunMetrics::from_result(&harness::run_scenario(&cfg, 17).unwrap(), &cfg);
    assert_eq!(summary.per_run, vec![single.clone()]);
    assert_eq!(summary.median_novel_latency, single.novel_latency);
    assert_eq!(summary.median_eoi_latency, single.eoi_latency);
    assert_eq!(summary.crash_runs, usize::from(single.crash.is_some()));
}

#[test]
fn sweep_requires_a_run() {
    assert!(harness::monte_carlo(&ScenarioConfig::default(), 0, 0).is_err());
}

#[test]
fn attacked_sweep_orders_detectors() {
    let summary = harness::monte_carlo(&ScenarioConfig::attacked(), 10, 100).unwrap();
    assert_eq!(summary.completed, 10);
    assert_eq!(summary.novel_false_alarm_runs, 0);
    assert!(summary.median_novel_latency.unwrap() < summary.median_eoi_latency.unwrap());
}

fn icguard() -> Command {
    Command::new(env!("CARGO_BIN_EXE_icguard"))
}

#[test]
fn cli_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.json");
    std::fs::write(&config, r#"{"duration": 1.0, "attack": {"kind": "step", "onset": 0.5, "magnitude": 2.0}}"#).unwrap();
    let out = dir.path().join("out");
    let status = icguard()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let (_, rows) = harness::read_csv(&out.join("run.csv")).unwrap();
    assert_eq!(rows.len(), 1001);
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["seed"], 3);
    assert_eq!(metrics["attack_onset"], 0.5);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, "{}").unwrap();
    let weak = dir.path().join("weak.json");
    std::fs::write(&weak, r#"{"M": [0.1, 11.5, 0.2, 2.0]}"#).unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, r#"{"tau0": "fast"}"#).unwrap();

    let code = |args: &[&str], cfg: &std::path::Path| {
        icguard().args(args).arg("--config").arg(cfg).output().unwrap().status.code()
    };
    assert_eq!(code(&["check-model"], &good), Some(0));
    assert_eq!(code(&["check-model", "--json"], &good), Some(0));
    assert_eq!(code(&["check-model"], &weak), Some(2));
    assert_eq!(code(&["check-model"], &broken), Some(2));
    assert_eq!(code(&["check-model"], &dir.path().join("missing.json")), Some(2));

    // An output path under a regular file cannot be created.
    let blocked = good.join("out");
    let status = icguard()
        .args(["run", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&blocked)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(3));
}

#[test]
fn cli_check_model_json_is_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{}").unwrap();
    let out = icguard().args(["check-model", "--json", "--config"]).arg(&cfg).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["unobservable_dim"], 1);
    assert_eq!(v["matching"]["full_column_rank"], true);
}
