//! Behavior of the four commands and the binary: exit codes, resumability,
//! partial-failure isolation, and report output.

use std::path::Path;
use std::process::Command as ProcessCommand;

use kvbench_cli::commands::{cmd_compare, cmd_preload, cmd_report, cmd_sweep, CmdError};
use kvbench_cli::config::BenchmarkConfig;
use kvbench_cli::store::ResultStore;
use kvbench_core::mock::{MockOptions, MockServer};
use kvbench_core::stats::ComparisonMetric;

fn config_json(dir: &Path, targets: &[(&str, u16)], baseline: &str, extra: &str) -> String {
    let targets_json: Vec<String> = targets
        .iter()
        .map(|(name, port)| {
            format!(r#"{{"system": "{name}", "host": "127.0.0.1", "port": {port}}}"#)
        })
        .collect();
    format!(
        r#"{{
  "targets": [{}],
  "workload": {{
    "name": "W",
    "set_ratio": 0.5,
    "get_ratio": 0.5,
    "skew": 0.9,
    "key_count": 50,
    "value_size": 16,
    "duration_secs": 0.5,
    "warmup_secs": 0.1,
    "concurrency_levels": [1, 2],
    "pipeline_depth": 1,
    "base_seed": 42
  }},
  "repetitions": 1,
  "baseline_system": "{baseline}",
  "output_dir": "{}",
  "cooldown_secs": 0.0,
  "preload_parallelism": 1{extra}
}}"#,
        targets_json.join(", "),
        dir.display(),
    )
}

fn parse_config(json: &str) -> BenchmarkConfig {
    let config: BenchmarkConfig = serde_json::from_str(json).expect("test config parses");
    config.validate().expect("test config valid");
    config
}

#[test]
fn preload_fills_the_target() {
    let server = MockServer::spawn().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&config_json(dir.path(), &[("base", server.port())], "base", ""));
    cmd_preload(&config, "base").unwrap();
    assert_eq!(server.key_count(), 50);
    // Idempotent on the key set.
    cmd_preload(&config, "base").unwrap();
    assert_eq!(server.key_count(), 50);
}

#[test]
fn unknown_target_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&config_json(dir.path(), &[("base", 6379)], "base", ""));
    match cmd_preload(&config, "mystery") {
        Err(CmdError::Usage(message)) => {
            assert!(message.contains("unknown target"), "got: {message}");
            assert_eq!(CmdError::Usage(message).exit_code(), 2);
        }
        other => panic!("expected usage error, got {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_operational_failure() {
    let closed_port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&config_json(dir.path(), &[("base", closed_port)], "base", ""));
    match cmd_preload(&config, "base") {
        Err(e @ CmdError::Failure(_)) => assert_eq!(e.exit_code(), 1),
        other => panic!("expected operational failure, got {other:?}"),
    }
}

#[test]
fn sweep_resumes_exactly_the_missing_cells() {
    let server = MockServer::spawn().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut json = config_json(dir.path(), &[("base", server.port())], "base", "");
    json = json.replace("\"repetitions\": 1", "\"repetitions\": 2");
    let config = parse_config(&json);
    cmd_preload(&config, "base").unwrap();

    // Simulate a sweep interrupted after 2 of 4 cells: persist records for
    // concurrency 1, repetitions 1 and 2, then invoke the sweep command.
    let store = ResultStore::open(dir.path()).unwrap();
    let spec = config.resolved_workload(None).unwrap();
    for repetition in [1, 2] {
        let ctx = kvbench_core::workload::RunContext {
            system: "base".to_string(),
            repetition,
            ..Default::default()
        };
        let result = kvbench_core::workload::run(&server.endpoint(), &spec, 1, &ctx).unwrap();
        store.append(&result).unwrap();
    }
    assert_eq!(store.existing_cells("base", "W").unwrap().len(), 2);

    cmd_sweep(&config, "base", None).unwrap();
    let results = store.load_all().unwrap();
    assert_eq!(results.len(), 4, "exactly the two missing cells were added");
    let mut cells: Vec<(u32, u32)> = results.iter().map(|r| (r.concurrency, r.repetition)).collect();
    cells.sort();
    assert_eq!(cells, vec![(1, 1), (1, 2), (2, 1), (2, 2)]);

    // Re-invocation after completion adds nothing.
    cmd_sweep(&config, "base", None).unwrap();
    assert_eq!(store.load_all().unwrap().len(), 4);
}

#[test]
fn sweep_continues_past_a_failing_level() {
    // Cap concurrent connections at 2 (one worker + the resource sampler):
    // the concurrency-8 level cannot keep 90% of its connections and aborts,
    // the concurrency-1 level still completes and persists.
    let server = MockServer::spawn_with(MockOptions {
        max_connections: Some(2),
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut json = config_json(dir.path(), &[("base", server.port())], "base", "");
    json = json.replace("\"concurrency_levels\": [1, 2]", "\"concurrency_levels\": [1, 8]");
    let config = parse_config(&json);
    cmd_preload(&config, "base").unwrap();

    cmd_sweep(&config, "base", None).unwrap();
    let store = ResultStore::open(dir.path()).unwrap();
    let results = store.load_all().unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0].concurrency, 1);
}

#[test]
fn sweep_with_zero_successes_fails() {
    let closed_port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&config_json(dir.path(), &[("base", closed_port)], "base", ""));
    match cmd_sweep(&config, "base", None) {
        Err(e @ CmdError::Failure(_)) => assert_eq!(e.exit_code(), 1),
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn compare_requires_a_non_baseline_side() {
    let server = MockServer::spawn().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut json = config_json(dir.path(), &[("base", server.port())], "base", "");
    json = json.replace("\"repetitions\": 1", "\"repetitions\": 2");
    let config = parse_config(&json);
    cmd_preload(&config, "base").unwrap();
    cmd_sweep(&config, "base", None).unwrap();

    match cmd_compare(&config, ComparisonMetric::Throughput) {
        Err(e @ CmdError::Failure(_)) => assert_eq!(e.exit_code(), 1),
        other => panic!("expected 'nothing to compare', got {other:?}"),
    }
}

#[test]
fn compare_emits_records_per_cell() {
    let base = MockServer::spawn().unwrap();
    let cand = MockServer::spawn().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut json = config_json(
        dir.path(),
        &[("base", base.port()), ("cand", cand.port())],
        "base",
        "",
    );
    json = json.replace("\"repetitions\": 1", "\"repetitions\": 2");
    let config = parse_config(&json);
    for target in ["base", "cand"] {
        cmd_preload(&config, target).unwrap();
        cmd_sweep(&config, target, None).unwrap();
    }
    cmd_compare(&config, ComparisonMetric::Throughput).unwrap();
    let records = std::fs::read_to_string(dir.path().join("comparisons/throughput.jsonl")).unwrap();
    // Two concurrency levels, one non-baseline system.
    assert_eq!(records.lines().count(), 2);
    cmd_compare(&config, ComparisonMetric::P99).unwrap();
    assert!(dir.path().join("comparisons/p99.jsonl").exists());
}

#[test]
fn report_fails_without_results_and_writes_files_with_them() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::spawn().unwrap();
    let config = parse_config(&config_json(dir.path(), &[("base", server.port())], "base", ""));
    match cmd_report(&config) {
        Err(e @ CmdError::Failure(_)) => assert_eq!(e.exit_code(), 1),
        other => panic!("expected failure on empty results, got {other:?}"),
    }
    cmd_preload(&config, "base").unwrap();
    cmd_sweep(&config, "base", None).unwrap();
    cmd_report(&config).unwrap();
    for name in [
        "summary.csv",
        "summary.txt",
        "W__throughput.csv",
        "W__p99.csv",
        "W__p999.csv",
        "W__cpu.csv",
        "W__memory.csv",
    ] {
        assert!(
            dir.path().join("reports").join(name).exists(),
            "missing report file {name}"
        );
    }
}

// --------------------------------------------------------------------------
// Binary-level checks (argument parsing, env overrides, exit codes).

fn kvbench() -> ProcessCommand {
    let mut cmd = ProcessCommand::new(env!("CARGO_BIN_EXE_kvbench"));
    cmd.env_remove("KVBENCH_CONFIG")
        .env_remove("KVBENCH_SEED")
        .env_remove("KVBENCH_OUTPUT");
    cmd
}

#[test]
fn binary_help_and_usage_errors() {
    let help = kvbench().arg("--help").output().unwrap();
    assert!(help.status.success());
    let stdout = String::from_utf8_lossy(&help.stdout);
    for sub in ["preload", "sweep", "compare", "report"] {
        assert!(stdout.contains(sub), "help must list {sub}");
    }

    // Missing --config is a usage error.
    let out = kvbench().args(["report"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Invalid metric value: clap rejects with the valid list.
    let out = kvbench()
        .args(["compare", "--metric", "bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("throughput") && stderr.contains("p99"), "{stderr}");

    // Unknown subcommand.
    let out = kvbench().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_end_to_end_with_env_config() {
    let server = MockServer::spawn().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results-env");
    let json = config_json(dir.path(), &[("base", server.port())], "base", "");
    let config_path = dir.path().join("bench.json");
    std::fs::write(&config_path, json).unwrap();

    let run = |args: &[&str]| {
        kvbench()
            .args(args)
            .env("KVBENCH_CONFIG", &config_path)
            .env("KVBENCH_OUTPUT", &out_dir)
            .output()
            .unwrap()
    };
    let preload = run(&["preload", "--target", "base"]);
    assert!(
        preload.status.success(),
        "preload failed: {}",
        String::from_utf8_lossy(&preload.stderr)
    );
    let stdout = String::from_utf8_lossy(&preload.stdout);
    assert!(stdout.contains("keys=50"), "key count line expected: {stdout}");

    let sweep = run(&["sweep", "--target", "base"]);
    assert!(
        sweep.status.success(),
        "sweep failed: {}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    // KVBENCH_OUTPUT redirected persistence.
    assert!(out_dir.join("results").join("base__W.jsonl").exists());

    let report = run(&["report"]);
    assert!(report.status.success());
    assert!(out_dir.join("reports").join("summary.txt").exists());
}

#[test]
fn seed_flag_overrides_base_seed() {
    let server = MockServer::spawn().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let json = config_json(dir.path(), &[("base", server.port())], "base", "");
    let config_path = dir.path().join("bench.json");
    std::fs::write(&config_path, json).unwrap();

    let preload = kvbench()
        .args(["--config", config_path.to_str().unwrap(), "preload", "--target", "base"])
        .output()
        .unwrap();
    assert!(preload.status.success());
    let sweep = kvbench()
        .args([
            "--config",
            config_path.to_str().unwrap(),
            "--seed",
            "777",
            "sweep",
            "--target",
            "base",
        ])
        .output()
        .unwrap();
    assert!(
        sweep.status.success(),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    let store = ResultStore::open(dir.path()).unwrap();
    let results = store.load_all().unwrap();
    assert!(!results.is_empty());
    assert!(results.iter().all(|r| r.seed_record.base_seed == 777));
}
