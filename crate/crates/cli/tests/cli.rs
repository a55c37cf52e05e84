use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riemobs"))
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example1.cfg")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn riemobs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Example system with the identity metric: the kernel direction x2 sees
/// `2 df2/dx2 = -4 x1 x2 / sqrt(1+x1^2)`, positive in two quadrants.
const IDENTITY_METRIC: &str = r#"
[system]
n = 2
m = 1
f = ["x2*sqrt(1+x1^2)", "-(x1/sqrt(1+x1^2))*x2^2"]
h = ["x1"]

[metric]
upper = ["1", "0", "1"]

[domain]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
grid = 11
"#;

const BROKEN: &str = r#"
[system]
n = 2
m = 1
f = ["x2", "x3"]
h = ["x1"]

[metric]
upper = ["1", "0", "1"]

[domain]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let example = example_config();
    let identity = write_config(dir.path(), "identity.cfg", IDENTITY_METRIC);
    let broken = write_config(dir.path(), "broken.cfg", BROKEN);
    let missing = dir.path().join("missing.cfg");
    let cases: &[(&Path, &[&str], i32)] = &[
        (&example, &["check-metric"], 0),
        (&example, &["check-negativity"], 0),
        (&example, &["check-totally-geodesic"], 0),
        (&example, &["check-convexity"], 0),
        (&example, &["distance", "--from", "0,0", "--to", "1,0"], 0),
        (&identity, &["check-negativity"], 1),
        (&broken, &["check-negativity"], 2),
        (&missing, &["check-metric"], 2),
        (&example, &["no-such-command"], 2),
        (&example, &["distance", "--from", "0,0,0", "--to", "1,0"], 2),
    ];
    for (cfg, args, expected) in cases {
        let mut full = vec!["--config", cfg.to_str().unwrap()];
        full.extend_from_slice(args);
        let out = run(&full);
        assert_eq!(
            code(&out),
            *expected,
            "{full:?}\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn config_errors_name_the_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write_config(dir.path(), "broken.cfg", BROKEN);
    let out = run(&["--config", broken.to_str().unwrap(), "check-metric"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("system.f"), "{err}");
}

#[test]
fn distance_prints_the_number() {
    let cfg = example_config();
    let out = run(&["--config", cfg.to_str().unwrap(), "distance", "--from", "0,0", "--to", "1,0"]);
    assert_eq!(code(&out), 0);
    let d: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    // P(0,0) has P11 = 2 and the x1 axis is a geodesic.
    assert!((d - 2f64.sqrt()).abs() < 1e-6, "{d}");
}

#[test]
fn reports_are_reproducible() {
    let cfg = example_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            dir.path().to_str().unwrap(),
            "fit-rho-q",
        ]);
        assert_eq!(code(&out), 0);
    }
    let ja = std::fs::read(a.path().join("fit-rho-q.json")).unwrap();
    let jb = std::fs::read(b.path().join("fit-rho-q.json")).unwrap();
    assert_eq!(ja, jb);
    let v: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn demo_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--out", dir.path().to_str().unwrap(), "--json", "demo-example1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "pass");
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,xhat1,xhat2,y1,d,V,flags");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[7], "3");
    assert!(dir.path().join("demo-example1.json").exists());
}

#[test]
fn simulate_and_verify_decay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config();
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "verify-decay",
        "--T",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
}
