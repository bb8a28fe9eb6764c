//! End-to-end tests driving the compiled binary.

use std::process::{Command, Output};

fn elclave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elclave"))
        .args(args)
        .env_remove("ELCLAVE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_proxy_reports_four_instructions() {
    let out = elclave(&[
        "run",
        "--pattern",
        "proxy",
        "--backend",
        "elasticlave",
        "--L",
        "512",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["counters"]["instructions"], 4);
    assert_eq!(report["counters"]["copies"], 0);
}

#[test]
fn run_zero_length_zeroes_data_counters() {
    let out = elclave(&[
        "run",
        "--pattern",
        "client_server",
        "--backend",
        "spatial",
        "--L",
        "0",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["counters"]["enc_ops"], 0);
    assert_eq!(report["counters"]["dec_ops"], 0);
    assert_eq!(report["counters"]["copies"], 0);
}

#[test]
fn malformed_flags_exit_2() {
    let out = elclave(&["run", "--pattern", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = elclave(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = elclave(&["run"]);
    assert_eq!(out.status.code(), Some(2)); // neither --spec nor --pattern
}

#[test]
fn compare_emits_consistent_rows_and_growing_ratio() {
    let mut ratios = Vec::new();
    for l in ["512", "4096", "65536"] {
        let out = elclave(&[
            "compare",
            "--pattern",
            "proxy",
            "--L",
            l,
            "--format",
            "json",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let reports: Vec<serde_json::Value> = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(reports.len(), 3);
        let l: u64 = l.parse().unwrap();
        let by_backend = |name: &str| {
            reports
                .iter()
                .find(|r| r["spec"]["backend"] == name)
                .unwrap()
        };
        let spatial = by_backend("spatial");
        assert_eq!(spatial["counters"]["enc_ops"], 2 * l);
        assert_eq!(spatial["counters"]["copies"], 6 * l);
        let full = by_backend("elasticlave");
        assert_eq!(full["counters"]["instructions"], 4);
        // All three backends observed the same bytes.
        let sums: Vec<&str> = reports
            .iter()
            .map(|r| r["checksum"].as_str().unwrap())
            .collect();
        assert_eq!(sums[0], sums[1]);
        assert_eq!(sums[0], sums[2]);
        // Oracle: (enc + dec + cpy) / instructions = 10L / 4.
        let spatial_ops = (2 * l) + (2 * l) + (6 * l);
        ratios.push(spatial_ops as f64 / 4.0);
    }
    assert!(ratios.windows(2).all(|w| w[1] > w[0]));
    // Single-point compare.
    let out = elclave(&["compare", "--pattern", "client_server", "--L", "1"]);
    assert!(out.status.success());
}

#[test]
fn verify_default_suites_pass() {
    let out = elclave(&["verify"]);
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("suite properties/bounded-escalation: PASS"));
    assert!(text.contains("suite properties/serialization: PASS"));
    assert!(text.contains("suite emulation: PASS"));
    assert!(text.contains("suite invariants/lock-exclusivity: PASS"));
}

#[test]
fn verify_mutated_build_fails_lock_suite() {
    let out = elclave(&[
        "verify",
        "--suite",
        "invariants",
        "--mutate",
        "no-change-lock-check",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn verify_rejects_empty_or_unknown_suites() {
    let out = elclave(&["verify", "--suite"]);
    assert_eq!(out.status.code(), Some(2));
    let out = elclave(&["verify", "--suite", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args = [
        "run",
        "--pattern",
        "proxy",
        "--L",
        "64",
        "--rounds",
        "3",
        "--seed",
        "42",
        "--format",
        "json",
    ];
    let a = elclave(&args);
    let b = elclave(&args);
    assert_eq!(a.stdout, b.stdout);
    // The env var is the seed fallback.
    let via_env = Command::new(env!("CARGO_BIN_EXE_elclave"))
        .args([
            "run",
            "--pattern",
            "proxy",
            "--L",
            "64",
            "--rounds",
            "3",
            "--format",
            "json",
        ])
        .env("ELCLAVE_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(a.stdout, via_env.stdout);
}

#[test]
fn spec_file_and_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("workload.conf");
    std::fs::write(
        &spec_path,
        "pattern = producer_consumer\nbackend = elasticlave\nL = 16\nrounds = 2\n",
    )
    .unwrap();
    let out = elclave(&[
        "run",
        "--spec",
        spec_path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let report_path = dir.path().join("report.json");
    std::fs::write(&report_path, out.stdout).unwrap();

    let rendered = elclave(&["report", report_path.to_str().unwrap(), "--format", "csv"]);
    assert!(rendered.status.success());
    let text = stdout(&rendered);
    assert!(text.starts_with("pattern,backend,L,rounds"));
    assert!(text.contains("producer_consumer_twoway,elasticlave,16,2"));

    // Unknown keys in spec files are config errors.
    std::fs::write(&spec_path, "pattern = proxy\nwibble = 3\n").unwrap();
    let out = elclave(&["run", "--spec", spec_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_program_file_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let program = dir.path().join("steps.prog");
    std::fs::write(
        &program,
        "\
enclave E1
enclave E2
adversary E2 budget 2
max-depth 8
setup E1 create 16 as R1
setup E1 change R1 rw--
setup E1 share R1 E2 r---
setup E1 map R1 0x10000000
step E1 write R1 0xaa
step E1 read R1
",
    )
    .unwrap();
    let out = elclave(&["verify", "--program", program.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("suite program: PASS"));

    // The same program fans out across workers with the same verdict.
    let out_jobs = elclave(&[
        "verify",
        "--program",
        program.to_str().unwrap(),
        "--jobs",
        "4",
    ]);
    assert!(out_jobs.status.success());
}
