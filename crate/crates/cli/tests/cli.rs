use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_manet-sim"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn simulate_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        scenario("diamond.scn").to_str().unwrap(),
        "--phase",
        "attack",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("received=0"), "{stdout}");
    let trace = fs::read_to_string(dir.path().join("attack.trace")).unwrap();
    assert!(trace.lines().last().unwrap().contains("ev=END checksum="));
    assert!(trace.contains("reason=blackhole_absorb"));
    let csv = fs::read_to_string(dir.path().join("attack.csv")).unwrap();
    assert!(csv.starts_with("bucket_end_us,received_pkts,received_bps,cum_received,energy_spent_j,detects\n"));
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn compare_is_byte_identical_across_invocations() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = scenario("paper.scn");
    let mut stdouts = Vec::new();
    for dir in [&a, &b] {
        let out = run(&[
            "compare",
            "--scenario",
            sc.to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        stdouts.push(out.stdout);
    }
    assert_eq!(stdouts[0], stdouts[1]);
    for name in [
        "baseline.trace",
        "attack.trace",
        "defend.trace",
        "summary.csv",
        "defend.csv",
    ] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let summary = fs::read_to_string(a.path().join("summary.csv")).unwrap();
    assert!(summary.lines().next().unwrap().starts_with("phase,sent,received"));
    assert!(!summary.contains("FAIL"));
}

#[test]
fn seed_flag_overrides_the_scenario() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = scenario("paper.scn");
    for (dir, seed) in [(&a, "42"), (&b, "7")] {
        let out = run(&[
            "simulate",
            "--scenario",
            sc.to_str().unwrap(),
            "--phase",
            "baseline",
            "--seed",
            seed,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
    }
    assert_ne!(
        fs::read(a.path().join("baseline.trace")).unwrap(),
        fs::read(b.path().join("baseline.trace")).unwrap()
    );
}

#[test]
fn analyze_recomputes_the_metrics_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        scenario("paper.scn").to_str().unwrap(),
        "--phase",
        "defend",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let trace = dir.path().join("defend.trace");
    let out = run(&[
        "analyze",
        "--trace",
        trace.to_str().unwrap(),
        "--bucket-ms",
        "500",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(out.stdout, fs::read(dir.path().join("defend.csv")).unwrap());
}

#[test]
fn invalid_scenario_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scn");
    fs::write(&path, "nodes = 25\nflow.0.src = 99\nflow.0.dst = 18\n").unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        path.to_str().unwrap(),
        "--phase",
        "baseline",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("flow.0.src"));
}

#[test]
fn unknown_phase_exits_with_one() {
    let out = run(&[
        "simulate",
        "--scenario",
        "x.scn",
        "--phase",
        "peace",
        "--out",
        "o",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_scenario_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "compare",
        "--scenario",
        dir.path().join("nope.scn").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn tampered_trace_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        scenario("chain.scn").to_str().unwrap(),
        "--phase",
        "baseline",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let path = dir.path().join("baseline.trace");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replacen("ev=RECV node=3", "ev=RECV node=2", 1);
    fs::write(&path, text).unwrap();
    let out = run(&["analyze", "--trace", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        scenario("chain.scn").to_str().unwrap(),
        "--phase",
        "baseline",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}
