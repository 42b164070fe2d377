use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cvqkd-lo");

const CHANNEL: &str = "va = 10\ntransmittance = 0.5\neta = 0.5\nxi = 0.1\npulses = 100000\n";
const BREACH: &str = "mu = 1\nnu = 1\ndelay_ns = 10\n";

fn write_config(dir: &Path, name: &str, extra: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, format!("{CHANNEL}{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn cvqkd(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exit_codes_follow_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("honest.conf", "", 0),
        ("pir.conf", "mu = 1\n", 2),
        ("breach.conf", BREACH, 3),
        (
            "monitored.conf",
            "mu = 1\nnu = 1\ndelay_ns = 10\ncountermeasure = true\n",
            2,
        ),
    ];
    for (name, extra, code) in cases {
        let cfg = write_config(dir.path(), name, extra);
        let out = cvqkd(&["run", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(code), "{name}: {}", stdout(&out));
    }
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "breach.conf", BREACH);
    let out_dir = dir.path().join("out");
    let out = cvqkd(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--samples",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("verdict=breached\n"));
    assert_eq!(report, stdout(&out));
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let samples = fs::read_to_string(out_dir.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 100_001);
    let saved = fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(saved.contains("delay_ns"));
}

#[test]
fn csv_flag_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "honest.conf", "");
    let a = stdout(&cvqkd(&["run", "--config", &cfg, "--csv"]));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("seed,config_sha256,verdict,"));
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());

    let again = stdout(&cvqkd(&["run", "--config", &cfg, "--csv"]));
    assert_eq!(a, again);
    let reseeded = stdout(&cvqkd(&["run", "--config", &cfg, "--csv", "--seed", "42"]));
    assert!(reseeded.lines().nth(1).unwrap().starts_with("42,"));
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.conf", "mu = 1.5\n");
    let out = cvqkd(&["run", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 6") && err.contains("mu"), "{err}");

    assert_eq!(cvqkd(&["run"]).status.code(), Some(1));
    assert_eq!(
        cvqkd(&["run", "--config", "/nonexistent.conf"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(cvqkd(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(cvqkd(&[]).status.code(), Some(1));
    assert_eq!(cvqkd(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_outputs() {
    let out = cvqkd(&["sweep"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let get = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("baseline_max_km") - 80.0).abs() <= 5.0);
    assert!((get("countermeasure_max_km") - 70.0).abs() <= 5.0);

    let dir = tempfile::tempdir().unwrap();
    let out = cvqkd(&["sweep", "--csv", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(stdout(&out).lines().count(), 243);
    for name in ["sweep_baseline.csv", "sweep_countermeasure.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 122);
    }
}

#[test]
fn sweep_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.conf");
    fs::write(&path, "d_max_km = 50\nd_step_km = 5\n").unwrap();
    let out = cvqkd(&["sweep", "--csv", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 1 + 2 * 11);
}

#[test]
fn pulse_demo_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = cvqkd(&["pulse-demo", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let shift: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("trigger_shift_ns="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(shift >= 10.0);
    for name in ["pulse_base.csv", "pulse_crafted.csv"] {
        let csv = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(csv.starts_with("time_ns,intensity\n"));
    }
    let csv = stdout(&cvqkd(&["pulse-demo", "--csv", "--shift-ns", "5"]));
    assert!(csv.starts_with("time_ns,base,crafted\n"));
}

#[test]
fn calibrate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cal.conf", "delay_ns = 10\n");
    let out = cvqkd(&["calibrate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let ratio: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("slope_ratio="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((ratio - 2.0 / 3.0).abs() < 0.01);
    let csv = stdout(&cvqkd(&["calibrate", "--config", &cfg, "--csv"]));
    assert!(csv.starts_with("power,variance_nominal,variance_delayed\n"));
}
