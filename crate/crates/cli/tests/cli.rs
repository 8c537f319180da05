use std::fs;
use std::process::{Command, Output};

fn poab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_names_every_bundled_family() {
    let o = poab(&["list"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for name in [
        "fig2-naive-abcast",
        "stable-tau-paxos",
        "leaderchange-barrier-free",
        "dual-leader-sigma3",
    ] {
        assert!(s.contains(name), "{name} missing from:\n{s}");
    }
}

#[test]
fn stable_run_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = poab(&["run", "stable-tau-paxos", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("VIOLATED"));
    for f in [
        "stable-tau-paxos.trace.jsonl",
        "stable-tau-paxos.report.txt",
        "stable-tau-paxos.metrics.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} not written");
    }
    let csv = fs::read_to_string(dir.path().join("stable-tau-paxos.metrics.csv")).unwrap();
    assert!(csv.starts_with("scenario,protocol,clients,request_size,"));
}

#[test]
fn expected_counterexample_exits_zero_and_names_bottom() {
    let o = poab(&["run", "fig2-naive-abcast"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("primary-integrity        VIOLATED"), "{s}");
    assert!(
        s.contains("\"kind\":\"apply\"") && s.contains("\"ok\":false"),
        "{s}"
    );
}

#[test]
fn scenario_file_with_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("naive.toml");
    let mut s = poabcast::scenario::bundled("fig2-naive-abcast").unwrap();
    s.expect_violation = false;
    fs::write(&path, s.to_toml()).unwrap();
    let o = poab(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_file_exits_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "name = \"x\"\nprotocol = 7\n").unwrap();
    let o = poab(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(poab(&["run", "--nope"]).status.code(), Some(2));
}

#[test]
fn short_horizon_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.toml");
    let mut s = poabcast::scenario::bundled("stable-tau-seq").unwrap();
    s.horizon = 60;
    fs::write(&path, s.to_toml()).unwrap();
    let o = poab(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}

#[test]
fn table1_matches_formulas() {
    let o = poab(&[
        "bench",
        "table1",
        "--delta",
        "10",
        "--clients",
        "1,5",
        "--format",
        "csv",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let s = stdout(&o);
    assert!(
        s.contains("table1-stable-tau-seq-c5,tau-seq,5,8,20,60.0,100,100,0.0,40"),
        "{s}"
    );
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = poab(&[
            "run",
            "dual-leader-sigma3",
            "--seed",
            "7",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in [
        "dual-leader-sigma3.trace.jsonl",
        "dual-leader-sigma3.metrics.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}
