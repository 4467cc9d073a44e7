use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
version = 1
seed = 5

[scheduler]
workers = 2

[[group]]
kind = "ls"
jobs = 2
parallelism = [4, 2, 1, 1]
source = { end_ms = 4000 }

[[group]]
kind = "ba"
jobs = 2
parallelism = [4, 2, 1, 1]
window_ms = 2000
source = { end_ms = 4000, rate = 20.0 }
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_priostream"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = bin(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--trace"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["latencies.csv", "summary.json", "trace.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(out.join("latencies.csv")).unwrap();
    assert!(header.starts_with("job_id,sink_id,p_out,emit_time,latency_ms,deadline_met\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["groups"]["LS"]["median_ms"].is_i64());
    assert_eq!(summary["seed"], 5);
}

#[test]
fn trace_is_flag_gated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert!(bin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
        .status
        .success());
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn overrides_reach_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = bin(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--scheduler",
        "local-first",
        "--workers",
        "3",
        "--seed",
        "9",
        "--quantum-ms",
        "4",
        "--policy",
        "edf",
        "--mode",
        "virtual",
    ]);
    assert!(o.status.success());
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["scheduler"], "local-first");
    assert_eq!(s["policy"], "edf");
    assert_eq!(s["workers"], 3);
    assert_eq!(s["seed"], 9);
}

#[test]
fn sweep_writes_combined_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let o = bin(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "quantum",
        "--values",
        "1,100",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 3);
    assert!(out.join("quantum-100").join("summary.json").exists());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        bin(&["run", "--config", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );

    let cfg = write_config(dir.path(), "version = 1\n[scheduler]\nworkers = \"many\"\n");
    let o = bin(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(
        bin(&["run", "--config", &cfg, "--scheduler", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(bin(&["run", "--config", &cfg, "--workers", "0"]).status.code(), Some(1));
    assert_eq!(
        bin(&["sweep", "--config", &cfg, "--axis", "colour", "--values", "1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        bin(&["sweep", "--config", &cfg, "--axis", "workers", "--values", "0"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = blocker.join("out");
    assert_eq!(
        bin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bin(&["run", "--config", &cfg, "--out", a.to_str().unwrap()])
        .status
        .success());
    assert!(bin(&["run", "--config", &cfg, "--out", b.to_str().unwrap()])
        .status
        .success());
    for f in ["latencies.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}
