use std::path::Path;
use std::process::{Command, Output};

use policykit_harness::{Block, CaseRecord, CaseStatus, ResultBundle};

fn policykit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_policykit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_forest(dir: &Path) -> String {
    let forest = dir.join("forest.txt");
    let out = policykit(&[
        "forest",
        "--trees=4",
        "--depth=3",
        "--features=6",
        "--treatments=3",
        "--out",
        path(&forest),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    forest.to_str().unwrap().to_owned()
}

#[test]
fn infer_json_report_carries_parity_and_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let forest = small_forest(dir.path());
    let out = policykit(&[
        "infer",
        "--backend=vectorized_rowmajor",
        "--batch-size=37",
        "--partitions=5",
        "--rows=2000",
        "--n-features=6",
        "--repeats=1",
        "--report=json",
        "--forest",
        &forest,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["backend"], "vectorized_rowmajor");
    assert_eq!(report["batch_size"], 37);
    assert_eq!(report["partitions"], 5);
    for key in [
        "reference_backend",
        "candidate_backend",
        "rows",
        "mismatch_rows",
        "max_abs_delta",
        "checksum_equal",
        "tolerance",
    ] {
        assert!(report["parity"].get(key).is_some(), "parity.{key}");
    }
    assert_eq!(report["parity"]["mismatch_rows"], 0);
    assert_eq!(report["parity"]["max_abs_delta"], 0.0);
    for key in ["rows", "rows_per_second", "wall_seconds", "samples"] {
        assert!(report["throughput"].get(key).is_some(), "throughput.{key}");
    }
}

#[test]
fn infer_reads_csv_written_by_synth() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("frame.csv");
    let out = policykit(&[
        "synth",
        "--n-rows=500",
        "--n-treatments=3",
        "--p-miss=0.2",
        "--missing-encoding=nan",
        "--feature-families=generic:6",
        "--out",
        path(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let forest = small_forest(dir.path());
    let scores = dir.path().join("scores.csv");
    let out = policykit(&[
        "infer",
        "--input",
        path(&csv),
        "--features=g00,g01,g02,g03,g04,g05",
        "--row-id-column=row_id",
        "--forest",
        &forest,
        "--repeats=1",
        "--report=json",
        "--scores",
        path(&scores),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rows"], 500);
    let written = std::fs::read_to_string(&scores).unwrap();
    assert_eq!(written.lines().count(), 501);
}

#[test]
fn unknown_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("infer.toml");
    std::fs::write(&config, "backend = \"vectorized_columnar\"\nbatchsize = 10\n").unwrap();
    let out = policykit(&["infer", "--config", path(&config)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batchsize"));

    let experiment = dir.path().join("c2.toml");
    std::fs::write(&experiment, "block = \"C2\"\n[knobs]\nrows = 10\n").unwrap();
    let out = policykit(&[
        "harness",
        "run",
        "--config",
        path(&experiment),
        "--out",
        path(dir.path()),
    ]);
    assert!(!out.status.success());
}

#[test]
fn harness_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let experiment = dir.path().join("c2.toml");
    std::fs::write(
        &experiment,
        "block = \"C2\"\nseed = 7\n[knobs]\nn_rows = 3000\nrandom_instances = 5\n",
    )
    .unwrap();
    let results = dir.path().join("results");
    let out = policykit(&["harness", "run", "--config", path(&experiment), "--out", path(&results)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(results.join("C2-seed7.bundle.json").exists());

    let out = policykit(&[
        "harness",
        "report",
        "--in",
        path(&results),
        "--format=markdown",
        "--stdout",
    ]);
    assert!(out.status.success());
    let md = String::from_utf8_lossy(&out.stdout);
    assert!(md.contains("C2"), "{md}");
    assert!(md.contains('|'), "{md}");
}

#[test]
fn report_exit_code_follows_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut bundle = ResultBundle::new(Block::F2, 1, serde_json::Value::Null);
    bundle.push(CaseRecord::new("skip").run(|_| {
        Ok(CaseStatus::SkippedTooLarge {
            candidate_rows: 124_000,
            threshold: 100_000,
        })
    }));
    bundle.write(dir.path()).unwrap();
    let out = policykit(&["harness", "report", "--in", path(dir.path()), "--stdout"]);
    assert!(out.status.success());

    bundle.push(CaseRecord::new("broken").run(|_| Ok(CaseStatus::check(false, || "forced".into()))));
    bundle.write(dir.path()).unwrap();
    let out = policykit(&["harness", "report", "--in", path(dir.path()), "--stdout"]);
    assert!(!out.status.success());
}
