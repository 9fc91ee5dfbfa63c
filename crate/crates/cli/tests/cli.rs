//! Command-level behavior: exit codes, override echoing, sweep outputs, and
//! the read-only report contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use credsim_core::parse_records;

fn credsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_credsim"))
}

fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let output = credsim().args(args).output().unwrap();
    assert!(
        output.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn run_smoke_writes_metrics_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"team_size":5,"adversary_count":3}"#);
    let out = dir.path().join("out");
    run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        data_file("synthetic_20.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21, "header plus 20 rows");
    assert!(csv.starts_with("round,accuracy,crs_0"));
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 20);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = data_file("synthetic_20.jsonl");
    let out = dir.path().join("out");

    // invariant violation
    let bad = write_config(dir.path(), r#"{"team_size":5,"adversary_count":6}"#);
    let output = credsim()
        .args([
            "run",
            "--config",
            bad.to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("adversary_count"));

    // unknown field rejected by strict parsing
    let unknown = write_config(
        dir.path(),
        r#"{"team_size":5,"adversary_count":3,"oops":1}"#,
    );
    let output = credsim()
        .args([
            "run",
            "--config",
            unknown.to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn dataset_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"team_size":5,"adversary_count":3}"#);
    let output = credsim()
        .args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--dataset",
            dir.path().join("missing.jsonl").to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn overrides_apply_after_file_and_echo_into_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"team_size":5,"adversary_count":3,"learning_rate":0.02}"#,
    );
    let out = dir.path().join("out");
    run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        data_file("synthetic_20.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "123",
        "--set",
        "learning_rate=0.05",
        "--set",
        "aggregator_kind=crs-centroid",
    ]);
    let text = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    let records = parse_records(&text).unwrap();
    let config = &records[0].config;
    assert_eq!(config.learning_rate, 0.05);
    assert_eq!(config.rng_seed, 123);
    assert_eq!(
        config.aggregator_kind,
        credsim_core::AggregatorKind::CrsCentroid
    );
}

#[test]
fn sweep_emits_table_and_per_point_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"team_size":5,"adversary_count":3,"topology_kind":"sia-random","edge_count":6,"warmup_rounds":5}"#,
    );
    let out = dir.path().join("out");
    run_ok(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        data_file("synthetic_20.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--param",
        "edge-count",
        "--values",
        "2,5,9",
    ]);
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(table
        .starts_with("parameter,value,rounds,accuracy,accuracy_post_warmup,mean_realized_edges"));
    assert_eq!(table.lines().count(), 4, "header plus one row per value");
    for value in ["2", "5", "9"] {
        let point = out.join(format!("point_{value}"));
        assert!(point.join("records.jsonl").exists());
        assert!(point.join("metrics.csv").exists());
    }
    // realized edge counts are reported per row and bounded by the draw count
    for line in table.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let value: f64 = fields[1].parse().unwrap();
        let mean_edges: f64 = fields[5].parse().unwrap();
        assert!(mean_edges <= value && mean_edges > 0.0);
    }
}

#[test]
fn report_is_read_only_and_summarizes_aggregators() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"team_size":5,"adversary_count":3}"#);
    let dataset = data_file("synthetic_200.jsonl");
    for (name, aggregator) in [("w", "weighted-majority"), ("u", "majority")] {
        run_ok(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            dir.path().join(name).to_str().unwrap(),
            "--set",
            &format!("aggregator_kind={aggregator}"),
        ]);
    }

    let list_dir = |p: &Path| -> Vec<String> {
        let mut entries: Vec<String> = walk(p);
        entries.sort();
        entries
    };
    fn walk(p: &Path) -> Vec<String> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(p).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path.display().to_string());
            }
        }
        out
    }

    let before = list_dir(dir.path());
    let output = run_ok(&[
        "report",
        "--records",
        dir.path().join("w/records.jsonl").to_str().unwrap(),
        dir.path().join("u/records.jsonl").to_str().unwrap(),
    ]);
    let after = list_dir(dir.path());
    assert_eq!(before, after, "report must not create or remove files");

    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("aggregator=weighted-majority"));
    assert!(stdout.contains("aggregator=majority"));
    assert!(stdout.contains("deltas vs majority baseline"));
    assert!(stdout.contains("final CrS"));
}

#[test]
fn report_on_directory_finds_record_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"team_size":3,"adversary_count":1}"#);
    run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--dataset",
        data_file("synthetic_20.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    let output = run_ok(&[
        "report",
        "--records",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&output.stdout).contains("rounds=20"));
}
