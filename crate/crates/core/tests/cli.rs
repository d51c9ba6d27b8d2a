use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ricworld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricworld"))
        .args(args)
        .env_remove("RICWORLD_OUT")
        .env_remove("RICWORLD_TRACE_DIR")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_outputs_and_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = ricworld(&[
        "run",
        &config("s1_uniform.toml"),
        "--duration",
        "3000",
        "--policy",
        "prop_fair",
        "--alpha",
        "0.1",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("Mbps"), "{stdout}");
    for f in [
        "series.csv",
        "series.bin",
        "events.csv",
        "media.csv",
        "throughput_1s.csv",
        "summary.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["policy"], "prop_fair(alpha=0.1)");
    assert_eq!(summary["summary"]["duration_ttis"], 3000);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nduration_ttis = 0\nues = []\n").unwrap();
    for args in [
        vec!["run", s(&bad)],
        vec!["run", "/nonexistent.toml"],
        vec![
            "run",
            &config("s1_uniform.toml"),
            "--policy",
            "prop_fair",
            "--alpha",
            "2",
        ],
        vec![
            "run",
            &config("s1_uniform.toml"),
            "--policy",
            "neural",
            "--policy-file",
            "/nonexistent.rwpn",
        ],
    ] {
        let o = ricworld(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    }
    let o = ricworld(&[
        "compare",
        &config("s1_uniform.toml"),
        &config("s1_uniform.toml"),
        "--metric",
        "latency",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    let o = ricworld(&[
        "run",
        &config("s1_uniform.toml"),
        "--duration",
        "10",
        "--out",
        "/proc/ricworld-cannot-write",
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn init_policy_then_neural_run() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("p.rwpn");
    let o = ricworld(&[
        "init-policy",
        "--n-ues",
        "2",
        "--seed",
        "3",
        "--out",
        s(&net),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let b = std::fs::read(&net).unwrap();
    assert_eq!(&b[..4], b"RWPN");

    let o = ricworld(&[
        "run",
        &config("s1_uniform.toml"),
        "--duration",
        "2000",
        "--policy",
        "neural",
        "--policy-file",
        s(&net),
        "--out",
        s(&dir.path().join("n")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    // a 3-UE network cannot drive a 2-UE scenario
    let net3 = dir.path().join("p3.rwpn");
    ricworld(&["init-policy", "--n-ues", "3", "--out", s(&net3)]);
    let o = ricworld(&[
        "run",
        &config("s1_uniform.toml"),
        "--policy",
        "neural",
        "--policy-file",
        s(&net3),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_prints_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for (r, delay) in runs.iter().zip(["0", "15"]) {
        let o = ricworld(&[
            "run",
            &config("2ue_synthetic_maxcqi_edge.toml"),
            "--duration",
            "5000",
            "--delay",
            delay,
            "--out",
            s(r),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let csv = dir.path().join("c.csv");
    let o = ricworld(&[
        "compare",
        s(&runs[0]),
        s(&runs[1]),
        "--metric",
        "throughput",
        "--csv",
        s(&csv),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("avg_throughput_mbps"), "{table}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
}
