use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SUBCOMMANDS: &[&[&str]] = &[
    &["eig"],
    &["partition"],
    &["filter-response"],
    &["nn-forward"],
    &["weyl-check"],
    &["dk-check"],
    &["weyl-law"],
    &["filter-stability"],
    &["nn-stability"],
    &["wireless"],
    &["wireless", "train"],
    &["wireless", "eval"],
];

fn fdtnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdtnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run fdtnet")
}

fn workdir() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("m.csv"),
        "2,-1,0,-1\n-1,2,-1,0\n0,-1,2,-1\n-1,0,-1,2\n",
    )
    .unwrap();
    std::fs::write(d.join("ev.json"), "[0, 1, 1.05, 1.12, 3]").unwrap();
    std::fs::write(
        d.join("stab.json"),
        r#"{"dimension":8,"alpha":0.3,"trials":4}"#,
    )
    .unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn help_on_every_subcommand() {
    let dir = workdir();
    assert!(fdtnet(dir.path(), &["--help"]).status.success());
    for sub in SUBCOMMANDS {
        let mut args = sub.to_vec();
        args.push("--help");
        let out = fdtnet(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(stdout(&out).contains("Usage"), "{args:?}");
    }
}

#[test]
fn exit_codes() {
    let dir = workdir();
    let d = dir.path();
    assert_eq!(
        fdtnet(d, &["eig", "--matrix", "m.csv"]).status.code(),
        Some(0)
    );
    assert_eq!(fdtnet(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        fdtnet(d, &["eig", "--matrix", "missing.csv"]).status.code(),
        Some(1)
    );

    std::fs::write(d.join("rect.csv"), "1,2,3\n3,4,5\n").unwrap();
    assert_eq!(
        fdtnet(d, &["eig", "--matrix", "rect.csv"]).status.code(),
        Some(1)
    );
    // asymmetric input is symmetrized with a warning
    std::fs::write(d.join("asym.csv"), "1,2\n3,4\n").unwrap();
    let out = fdtnet(d, &["eig", "--matrix", "asym.csv"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("symmetrizing"));
    std::fs::write(d.join("unsorted.json"), "[3, 1, 2]").unwrap();
    let out = fdtnet(
        d,
        &[
            "partition",
            "--eigenvalues",
            "unsorted.json",
            "--alpha",
            "0.1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    // fewer distinct eigenvalues than filter taps: the FDT projection fit is degenerate
    std::fs::write(
        d.join("deg.json"),
        r#"{"scenario":{"n":2},"training":{"iterations":1,"draws_per_step":1,"objective_draws":1,"taps":4,"alpha":100.0},"layers":[1]}"#,
    )
    .unwrap();
    assert_eq!(
        fdtnet(d, &["wireless", "train", "--config", "deg.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = workdir();
    let d = dir.path();
    std::fs::write(
        d.join("bad.json"),
        r#"{"dimension":8,"alpha":0.3,"trials":4,"typo":1}"#,
    )
    .unwrap();
    let out = fdtnet(d, &["filter-stability", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo"));
    std::fs::write(d.join("w.json"), r#"{"training":{"iteratons":3}}"#).unwrap();
    assert_eq!(
        fdtnet(d, &["wireless", "train", "--config", "w.json"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn partition_report() {
    let dir = workdir();
    let out = fdtnet(
        dir.path(),
        &["partition", "--eigenvalues", "ev.json", "--alpha", "0.2"],
    );
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["version"], fdtnet::VERSION);
    assert_eq!(v["config"]["alpha"], 0.2);
    assert_eq!(v["D"], 2);
    assert_eq!(v["N"], 1);
    assert_eq!(v["groups"], serde_json::json!([[1, 2, 3]]));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = workdir();
    let d = dir.path();
    for args in [
        &[
            "weyl-check",
            "--matrix",
            "m.csv",
            "--epsilon",
            "0.2",
            "--seed",
            "11",
        ][..],
        &["filter-stability", "--config", "stab.json", "--seed", "11"],
        &[
            "nn-stability",
            "--config",
            "stab.json",
            "--seed",
            "11",
            "--format",
            "json",
        ],
    ] {
        let a = fdtnet(d, args);
        let b = fdtnet(d, args);
        assert!(a.status.success(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let a = fdtnet(
        d,
        &["filter-stability", "--config", "stab.json", "--seed", "1"],
    );
    let b = fdtnet(
        d,
        &["filter-stability", "--config", "stab.json", "--seed", "2"],
    );
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn reports_replay_as_configs() {
    let dir = workdir();
    let d = dir.path();
    let first = fdtnet(
        d,
        &[
            "filter-stability",
            "--config",
            "stab.json",
            "--seed",
            "5",
            "-o",
            "r.csv",
        ],
    );
    assert!(first.status.success());
    let csv = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(csv.starts_with("# fdtnet "));
    assert!(csv.lines().nth(1).unwrap().starts_with("# config: "));

    // the recorded config carries the seed, so no --seed is needed on replay
    let replay = fdtnet(d, &["filter-stability", "--config", "r.csv"]);
    assert!(replay.status.success());
    assert_eq!(replay.stdout, csv.as_bytes());

    let json = fdtnet(
        d,
        &[
            "filter-stability",
            "--config",
            "stab.json",
            "--seed",
            "5",
            "--format",
            "json",
            "-o",
            "r.json",
        ],
    );
    assert!(json.status.success());
    let again = fdtnet(
        d,
        &["filter-stability", "--config", "r.json", "--format", "json"],
    );
    assert_eq!(again.stdout, std::fs::read(d.join("r.json")).unwrap());
}

#[test]
fn csv_and_json_agree() {
    let dir = workdir();
    let d = dir.path();
    let json = fdtnet(d, &["eig", "--matrix", "m.csv"]);
    let csv = fdtnet(d, &["eig", "--matrix", "m.csv", "--format", "csv"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let from_json: Vec<f64> = v["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let from_csv: Vec<f64> = stdout(&csv)
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("eigenvalue"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(from_json.len(), 4);
    for (a, b) in from_json.iter().zip(&from_csv) {
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }
    for (x, want) in from_json.iter().zip([0.0, 2.0, 2.0, 4.0]) {
        assert!((x - want).abs() < 1e-10);
    }
}
