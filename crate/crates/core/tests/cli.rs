//! Command-line behaviour: exit codes, outputs and error messages.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vdrelabel(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdrelabel")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SHORT_SIN: &[&str] = &["--iterations", "3000", "--burn-in", "500"];

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for cmd in [
        vec!["simulate-sin", "--out", "s.txt"],
        vec!["simulate-auger", "--out", "a.txt"],
        vec!["fit", "--samples", "s.txt", "--out-dir", "f"],
        vec!["montecarlo", "--out", "mc.csv"],
        vec!["oracle"],
    ] {
        let o = vdrelabel(&cmd, d);
        assert_eq!(code(&o), 1, "{cmd:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("--seed"), "{}", stderr(&o));
    }
    assert_eq!(code(&vdrelabel(&["fit", "--seed", "1", "--bogus"], d)), 1);
    assert_eq!(code(&vdrelabel(&["fit", "--seed", "1", "--samples", "s", "--out-dir", "f", "--init-rule", "median"], d)), 1);
    assert_eq!(code(&vdrelabel(&["--help"], d)), 0);
    assert_eq!(code(&vdrelabel(&["--version"], d)), 0);
}

#[test]
fn bad_configuration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[fit]\nnot_a_field = 3\n").unwrap();
    let o = vdrelabel(&["simulate-sin", "--seed", "1", "--config", "bad.toml", "--out", "s.txt"], d);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("not_a_field"), "{}", stderr(&o));

    fs::write(d.join("burn.toml"), "[sinusoid.chain]\niterations = 10\nburn_in = 20\n").unwrap();
    let o = vdrelabel(&["simulate-sin", "--seed", "1", "--config", "burn.toml", "--out", "s.txt"], d);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec!["simulate-auger", "--seed", "3", "--out", "a.txt"];
    args.extend_from_slice(SHORT_SIN);
    assert_eq!(code(&vdrelabel(&args, d)), 0);
    let mut args = vec!["simulate-sin", "--seed", "3", "--out", "s.txt"];
    args.extend_from_slice(SHORT_SIN);
    assert_eq!(code(&vdrelabel(&args, d)), 0);
    assert_eq!(code(&vdrelabel(&["fit", "--seed", "3", "--samples", "s.txt", "--out-dir", "fit", "--iterations", "10"], d)), 0);

    // a one-dimensional model against two-dimensional samples
    let o = vdrelabel(&["report", "--model", "fit/model.json", "--samples", "a.txt", "--out-dir", "rep"], d);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("dimension"), "{}", stderr(&o));

    // a corrupted record names its line
    let text = fs::read_to_string(d.join("s.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let data = lines.iter().position(|l| *l == "data").unwrap();
    let mut broken: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    broken[data + 3] = "2 0.5 not-a-number".into();
    fs::write(d.join("broken.txt"), broken.join("\n") + "\n").unwrap();
    let o = vdrelabel(&["fit", "--seed", "3", "--samples", "broken.txt", "--out-dir", "f2"], d);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains(&format!("line {}", data + 4)), "{}", stderr(&o));

    // a file cut short is detected by its trailer
    fs::write(d.join("short.txt"), lines[..data + 5].join("\n") + "\n").unwrap();
    let o = vdrelabel(&["fit", "--seed", "3", "--samples", "short.txt", "--out-dir", "f3"], d);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = vdrelabel(&["fit", "--seed", "3", "--samples", "missing.txt", "--out-dir", "f4"], d);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("pe.csv"), "bin,count\n1,0\n2,4\n3,9\n4,3\n").unwrap();
    // starting from no muon leaves observed counts without expectation
    fs::write(d.join("empty.toml"), "[auger.chain]\ninitial_muons = []\niterations = 100\nburn_in = 10\n").unwrap();
    let o = vdrelabel(&["simulate-auger", "--seed", "1", "--config", "empty.toml", "--signal", "pe.csv", "--out", "a.txt"], d);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec!["simulate-sin", "--seed", "9", "--out", "s.txt", "--signal-out", "y.csv", "--clean-out", "c.csv"];
    args.extend_from_slice(SHORT_SIN);
    let o = vdrelabel(&args, d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = vdrelabel(&["fit", "--seed", "9", "--samples", "s.txt", "--out-dir", "fit", "--init-rule", "threshold", "--iterations", "20"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["model.json", "initial_model.json", "trace.csv", "trace_components.csv", "allocations.txt", "fit.json", "run.json"] {
        assert!(d.join("fit").join(f).is_file(), "missing fit/{f}");
    }
    let o = vdrelabel(
        &[
            "report", "--seed", "9", "--model", "fit/model.json", "--samples", "s.txt", "--allocations", "fit/allocations.txt",
            "--signal", "y.csv", "--clean", "c.csv", "--interval", "0,0.785", "--interval", "0.785,1.571", "--out-dir", "rep",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "report.json", "pk.csv", "intensity.csv", "components.csv", "bma_histogram.csv", "residual_histogram.csv",
        "reconstruction_bma.csv", "reconstruction_model.csv", "run.json",
    ] {
        assert!(d.join("rep").join(f).is_file(), "missing rep/{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("rep/report.json")).unwrap()).unwrap();
    assert_eq!(report["intervals"].as_array().unwrap().len(), 2);
    assert!(report["reconstruction_error_db"]["bma"].as_f64().unwrap().is_finite());

    // reconstruction without a seed is refused
    let o = vdrelabel(
        &["report", "--model", "fit/model.json", "--samples", "s.txt", "--signal", "y.csv", "--clean", "c.csv", "--out-dir", "rep2"],
        d,
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let o = vdrelabel(&["oracle", "--seed", "2", "--check", "pulse"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["pulse_max_rel_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn same_seed_same_bytes_and_different_seed_different_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |seed: &str, out: &str| {
        let mut args = vec!["simulate-sin", "--seed", seed, "--out", out];
        args.extend_from_slice(SHORT_SIN);
        assert_eq!(code(&vdrelabel(&args, d)), 0);
        fs::read(d.join(out)).unwrap()
    };
    let a = run("4", "a.txt");
    assert_eq!(a, run("4", "b.txt"));
    assert_ne!(a, run("5", "c.txt"));
}
