use std::path::Path;
use std::process::{Command, Output};

fn slmc(args: &[&str], out_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slmc"));
    cmd.args(args).env_remove("SLMC_OUTPUT_ROOT");
    if let Some(root) = out_root {
        cmd.env("SLMC_OUTPUT_ROOT", root);
    }
    cmd.output().unwrap()
}

const TINY: &str = r#"name = "tiny"

[target]
kind = "correlated_gaussian"

[sampler]
n_qubits = 4
m_qubits = 2
conditioner = "lblr"

[train]
steps = 30
metric_every = 10
seed = 7
"#;

#[test]
fn run_writes_outputs_under_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let root = dir.path().join("out");
    let out = slmc(&["run", cfg.to_str().unwrap()], Some(&root));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = root.join("tiny");
    for f in ["metrics.csv", "samples.jsonl", "histogram.txt", "config.echo.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("step,cross_entropy,wasserstein,acceptance_ratio"));
    assert_eq!(csv.lines().count(), 4);

    let report = slmc(&["metrics", run.to_str().unwrap()], None);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("acceptance_ratio"));
}

#[test]
fn out_flag_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let (env_root, flag_root) = (dir.path().join("env"), dir.path().join("flag"));
    let out = slmc(&["run", cfg.to_str().unwrap(), "--out", flag_root.to_str().unwrap()], Some(&env_root));
    assert!(out.status.success());
    assert!(flag_root.join("tiny/metrics.csv").is_file());
    assert!(!env_root.exists());
}

#[test]
fn bad_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, TINY.replace("m_qubits = 2", "m_qubits = 9")).unwrap();
    let out = slmc(&["run", cfg.to_str().unwrap()], Some(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 8"), "{err}");

    let missing = slmc(&["run", dir.path().join("nope.toml").to_str().unwrap()], Some(dir.path()));
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(slmc(&["frobnicate"], None).status.code(), Some(2));
}

#[test]
fn validate_exit_codes() {
    let ok = slmc(&["validate"], None);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let table = String::from_utf8_lossy(&ok.stdout);
    assert!(table.contains("dft-equivalence") && !table.contains("FAIL"));

    let broken = slmc(&["validate", "--theta-scale", "1.5"], None);
    assert_eq!(broken.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&broken.stdout).contains("normalization"));

    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.txt");
    std::fs::write(&grid, "dims 4\n1 2 -3 4\n").unwrap();
    let bad_grid = slmc(&["validate", "--grid", grid.to_str().unwrap()], None);
    assert_eq!(bad_grid.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_grid.stdout).contains("grid-file"));
}

#[test]
fn bench_reports_infeasible_baseline() {
    let out = slmc(&["bench", "--qubits", "8,40", "--draws", "50"], None);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("infeasible"), "{text}");
}
