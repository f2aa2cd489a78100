use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedsink_cli::{
    execute, parse_config, validate, Outcome, CSV_COLUMNS, EXIT_BACKEND, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INCOMPLETE,
    EXIT_OK,
};
use fedsink_core::Verdict;

fn fedsink(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fedsink")).arg(&path).args(extra).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn summary_header_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = r#"{
        "mode": "sweep",
        "instance": {"generate": {"n": 8}},
        "sweep": {"modes": ["centralized", "sync_a2a", "star", "async_a2a"], "c": [2]}
    }"#;
    let o = fedsink(dir.path(), config, &["--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let golden = include_str!("golden/summary_header.csv");
    assert_eq!(csv.lines().next().unwrap(), golden.trim_end());
    assert_eq!(golden.trim_end().split(',').collect::<Vec<_>>(), CSV_COLUMNS);
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(fs::read_to_string(out.join("runs.jsonl")).unwrap().lines().count(), 4);
}

#[test]
fn empty_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedsink(dir.path(), "", &[]);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn diagnostics_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let typo = "{\n  \"mode\": \"centralized\",\n  \"instance\": {\"generate\": {\"n\": 8}},\n  \"repetitons\": 3\n}";
    let o = fedsink(dir.path(), typo, &[]);
    assert_eq!(code(&o), EXIT_CONFIG);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") && err.contains("repetitons"), "{err}");

    let bad_c = "{\n  \"mode\": \"sync_a2a\",\n  \"instance\": {\"generate\": {\"n\": 9}},\n  \"fed\": {\"c\": 2}\n}";
    let o = fedsink(dir.path(), bad_c, &[]);
    assert_eq!(code(&o), EXIT_CONFIG);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") && err.contains("divide"), "{err}");

    let o = fedsink(dir.path(), r#"{"mode": "star", "instance": {"generate": {"n": 8}}}"#, &["--backend", "udp"]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn exit_codes_follow_the_worst_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let capped = r#"{"mode": "centralized", "instance": {"generate": {"n": 16}},
        "fed": {"stop": {"threshold": 1e-14, "max_iterations": 3}}}"#;
    assert_eq!(code(&fedsink(dir.path(), capped, &[])), EXIT_INCOMPLETE);
    let budget = r#"{"mode": "centralized", "instance": {"generate": {"n": 16}},
        "fed": {"stop": {"threshold": -1, "max_iterations": 3}}}"#;
    assert_eq!(code(&fedsink(dir.path(), budget, &[])), EXIT_OK);
    let diverged = r#"{"mode": "sync_a2a", "instance": {"generate": {"n": 16}},
        "fed": {"c": 2, "stop": {"threshold": 1e-30, "divergence_iterations": 5}}}"#;
    assert_eq!(code(&fedsink(dir.path(), diverged, &[])), EXIT_DIVERGED);
    let mixed = r#"{"mode": "sweep", "instance": {"generate": {"n": 16}},
        "fed": {"stop": {"threshold": 1e-30, "divergence_iterations": 5, "max_iterations": 3}},
        "sweep": {"modes": ["centralized"], "threshold": [1e-3, 1e-30]}}"#;
    assert_eq!(code(&fedsink(dir.path(), mixed, &[])), EXIT_INCOMPLETE);
}

#[test]
fn unreachable_peers_are_a_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"mode": "sync_a2a", "instance": {"generate": {"n": 8}},
        "backend": {"tcp": {"peers": ["192.0.2.1:9", "192.0.2.1:10"]}},
        "fed": {"c": 2, "recv_timeout_secs": 0.5}}"#;
    let o = fedsink(dir.path(), config, &[]);
    assert_eq!(code(&o), EXIT_BACKEND, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedsink(
        dir.path(),
        r#"{"mode": "centralized"}"#,
        &["--mode", "async_a2a", "--n", "12", "--c", "3", "--alpha", "0.7", "--seed", "9", "--backend", "tcp"],
    );
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let line: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(line["mode"], "all_to_all_async");
    assert_eq!(line["backend"], "tcp");
    assert_eq!(line["n"], 12);
    assert_eq!(line["c"], 3);
    assert_eq!(line["seed"], 9);
    assert_eq!(line["params"]["alpha"], 0.7);
}

#[test]
fn repetitions_use_distinct_seeds_and_reproduce() {
    let config = r#"{"mode": "async_a2a", "instance": {"generate": {"n": 12}}, "repetitions": 15, "seed": 100,
        "fed": {"c": 2, "delay": {"uniform": {"lo": 1, "hi": 3}}}}"#;
    let run = || {
        let v = validate(parse_config(config).unwrap(), Some(config)).unwrap();
        match execute(&v).unwrap().outcome {
            Outcome::Runs(records) => records,
            _ => unreachable!(),
        }
    };
    let first = run();
    assert_eq!(first.len(), 15);
    let seeds: Vec<u64> = first.iter().map(|(r, _)| r.seed).collect();
    assert_eq!(seeds, (100..115).collect::<Vec<_>>());
    let lines = |rs: &[(fedsink_fed::RunReport, fedsink_cli::SummaryRow)]| {
        rs.iter().map(|(r, _)| r.to_json_line(true)).collect::<Vec<_>>()
    };
    assert_eq!(lines(&first), lines(&run()));
}

#[test]
fn alpha_sweep_reports_one_row_per_run() {
    let config = r#"{"mode": "sweep", "instance": {"generate": {"n": 16}}, "repetitions": 2,
        "fed": {"c": 2, "delay": {"uniform": {"lo": 1, "hi": 3}}, "stop": {"max_iterations": 400}},
        "sweep": {"modes": ["async_a2a"], "alpha": [0.001, 0.005, 0.2, 0.5]}}"#;
    let v = validate(parse_config(config).unwrap(), Some(config)).unwrap();
    let Outcome::Runs(records) = execute(&v).unwrap().outcome else { unreachable!() };
    assert_eq!(records.len(), 8);
    let alphas: Vec<f64> = records.iter().map(|(_, row)| row.alpha.unwrap()).collect();
    assert_eq!(alphas, [0.001, 0.001, 0.005, 0.005, 0.2, 0.2, 0.5, 0.5]);
    for (report, row) in &records {
        assert_eq!(row.verdict, report.verdict);
        assert!(row.tau_max.unwrap() >= 1);
    }
    assert!(records[6..].iter().all(|(r, _)| r.verdict == Verdict::Converged));
}

#[test]
fn finrisk_mode_writes_result_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("risk");
    let o = fedsink(dir.path(), r#"{"mode": "finrisk", "risk": "three_asset"}"#, &["--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("risk_result.json")).unwrap()).unwrap();
    assert!((result["rho_worst"].as_f64().unwrap() + 0.48).abs() < 0.01);
    assert!(out.join("risk_plan.fsk").exists());
}

#[test]
fn epsilon_study_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eps");
    let config = r#"{"mode": "epsilon_study", "epsilon_study": {"epsilons": [0.01, 0.005]}}"#;
    let o = fedsink(dir.path(), config, &["--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("epsilon_study.csv")).unwrap();
    assert!(table.starts_with("epsilon,i_min,"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn instance_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fedsink_core::GenSpec::new(8, 4);
    let p = fedsink_core::generate(&spec).unwrap();
    let path = dir.path().join("inst.fsk");
    fedsink_core::container::instance_container(&p, Some(&spec)).save(&path).unwrap();
    let config = format!(r#"{{"mode": "star", "instance": {{"path": {:?}}}, "fed": {{"c": 4}}}}"#, path);
    let o = fedsink(dir.path(), &config, &[]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let missing = r#"{"mode": "star", "instance": {"path": "/nonexistent.fsk"}}"#;
    assert_eq!(code(&fedsink(dir.path(), missing, &[])), EXIT_CONFIG);
}
