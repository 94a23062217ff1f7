//! End-to-end tests of the `teleop` binary: exit codes, report files,
//! reproducibility and the gain-sweep radius law.

use std::path::{Path, PathBuf};
use std::process::Command;

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_teleop")
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(exe()).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn shipped_examples_parse_and_certify() {
    for name in ["nodelay_example.toml", "delayed_example.toml"] {
        let path = scenarios_dir().join(name);
        let sc = teleop_core::simulator::Scenario::load(&path).unwrap();
        let cert = sc.certify().unwrap();
        assert!(cert.passed, "{name}: {cert}");
    }
}

#[test]
fn certify_pass_exit_zero_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("nodelay_example.toml");
    let (code, stdout, _) = run_cli(&[
        "certify",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}");
    let report = std::fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
    assert!(report.contains("PASS"));
    // Every inequality is listed with its margin.
    for name in ["P_bar", "D_bar_master", "D_bar_slave", "K0_master"] {
        assert!(report.contains(name), "missing {name} in report");
    }
    assert!(dir.path().join("certificate.json").exists());
}

#[test]
fn certify_failing_gains_exit_one_names_violation() {
    let dir = tempfile::tempdir().unwrap();
    let template = std::fs::read_to_string(scenarios_dir().join("nodelay_example.toml")).unwrap();
    // Weaken the damping far below the certified requirement.
    let weakened = template.replace("d = [8.0, 8.0]", "d = [0.5, 0.5]");
    let path = dir.path().join("weak.toml");
    std::fs::write(&path, weakened).unwrap();
    let (code, stdout, _) = run_cli(&[
        "certify",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(stdout.contains("FAIL"));
    assert!(stdout.contains("D_bar"), "violation not named:\n{stdout}");
}

#[test]
fn malformed_scenario_exit_two_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "step = 0.001\nduration = \"ten\"\n").unwrap();
    let (code, _, stderr) = run_cli(&[
        "certify",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(
        stderr.contains("line") || stderr.contains("duration"),
        "diagnostic should locate the problem:\n{stderr}"
    );
}

fn equilibrium_scenario() -> String {
    let template = std::fs::read_to_string(scenarios_dir().join("nodelay_example.toml")).unwrap();
    template
        .replace("q = [0.5, 0.0]", "q = [0.0, 0.0]")
        .replace("duration = 10.0", "duration = 1.0")
        .replace(
            "tau_bar = 1.0\nkind = \"step\"\namplitude = [1.0, 0.0]\nstart = 1.0",
            "tau_bar = 0.0\nkind = \"zero\"",
        )
}

#[test]
fn run_equilibrium_exit_zero_zero_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("equilibrium.toml");
    std::fs::write(&path, equilibrium_scenario()).unwrap();
    let (code, stdout, stderr) = run_cli(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout:\n{stdout}\nstderr:\n{stderr}");
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,qm0,qm1,"));
    for line in lines {
        for field in line.split(',').skip(1) {
            let v: f64 = field.parse().unwrap();
            assert!(v.abs() < 1e-12, "nonzero entry {v}");
        }
    }
    assert!(dir.path().join("trace_meta.json").exists());
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn run_is_byte_reproducible() {
    let base = tempfile::tempdir().unwrap();
    let path = base.path().join("scenario.toml");
    std::fs::write(&path, equilibrium_scenario()).unwrap();
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out = base.path().join(sub);
        let (code, _, _) = run_cli(&[
            "run",
            "--scenario",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        outputs.push((
            std::fs::read(out.join("trace.csv")).unwrap(),
            std::fs::read(out.join("trace_meta.json")).unwrap(),
            std::fs::read(out.join("report.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn divergence_exit_three_with_time() {
    let dir = tempfile::tempdir().unwrap();
    let template = std::fs::read_to_string(scenarios_dir().join("nodelay_example.toml")).unwrap();
    // A blow-up bound below the initial state norm aborts immediately.
    let diverging = template.replace("blowup = 1.0e6", "blowup = 0.4");
    let path = dir.path().join("diverging.toml");
    std::fs::write(&path, diverging).unwrap();
    let (code, _, stderr) = run_cli(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    assert!(stderr.contains("diverged at t ="), "{stderr}");
    assert!(dir.path().join("divergence.txt").exists());
}

#[test]
fn suite_sweep_gains_radius_halves() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run_cli(&[
        "suite",
        "--suite",
        "sweep-gains",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}");
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let radii: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse::<f64>().unwrap())
        .collect();
    assert_eq!(radii.len(), 3);
    // radius^2 is inversely proportional to the interconnection stiffness.
    assert!((radii[0] / radii[1] - 2.0).abs() < 1e-9);
    assert!((radii[1] / radii[2] - 2.0).abs() < 1e-9);
}

#[test]
fn run_delayed_example_reports_entry_time() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("delayed_example.toml");
    let (code, stdout, stderr) = run_cli(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout:\n{stdout}\nstderr:\n{stderr}");
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("attractive set:pass"), "{report}");
    assert!(report.contains("settled"), "{report}");
    // Delayed traces carry proxies, delays and both Lyapunov components.
    let header = std::fs::read_to_string(dir.path().join("trace.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    for col in ["qhm0", "qhds1", "d_m", "d_s", "V1", "V2"] {
        assert!(header.contains(col), "missing column {col}");
    }
}

#[test]
fn suite_sweep_delay_all_runs_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run_cli(&[
        "suite",
        "--suite",
        "sweep-delay",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}");
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    for line in summary.lines().skip(1) {
        assert!(line.ends_with(",pass"), "{line}");
    }
}

#[test]
fn suite_unknown_name_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run_cli(&[
        "suite",
        "--suite",
        "bogus",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("unknown suite"));
}
