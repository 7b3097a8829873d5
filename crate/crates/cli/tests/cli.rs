//! End-to-end checks of the `aeromanip` binary: exit codes, the error line
//! format and the files a run leaves behind.

use std::path::Path;
use std::process::{Command, Output};

fn aeromanip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aeromanip"))
        .args(args)
        .env_remove("AEROMANIP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn short_run(dir: &Path) -> String {
    write(dir, "short.toml", "[simulation]\nduration_s = 0.2\n")
}

#[test]
fn defaults_validate() {
    let dir = tempfile::tempdir().unwrap();
    let defaults = aeromanip(&["defaults"]);
    assert!(defaults.status.success());
    let path = write(dir.path(), "defaults.toml", &stdout(&defaults));
    let out = aeromanip(&["validate", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("observer joint2"));
    assert!(text.trim_end().ends_with("ok"));
}

#[test]
fn fast_observer_is_rejected_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "fast.toml",
        "[observer]\ncutoff_zeta_radps = [200.0, 40.0, 25.0, 18.0, 6.0, 5.5]\n",
    );
    let out = aeromanip(&["validate", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.starts_with("error: kind=constraint-violation code=2 message="),
        "{err}"
    );
    assert!(err.contains('x'), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn malformed_config_is_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "bad.toml",
        "[simulation]\nduration_s = \"long\"\n",
    );
    let out = aeromanip(&["validate", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: kind=invalid-config code=2"));
}

#[test]
fn unknown_key_is_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "typo.toml",
        "[impedance]\nstifness = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0]\n",
    );
    let out = aeromanip(&["validate", &path]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_is_code_3() {
    let out = aeromanip(&["validate", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error: kind=io code=3"));
}

#[test]
fn unwritable_output_is_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_run(dir.path());
    // a regular file where the output directory should go
    let blocker = write(dir.path(), "blocker", "");
    let out = aeromanip(&["simulate", &config, "--out", &format!("{blocker}/run")]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn same_seed_gives_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_run(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = aeromanip(&[
            "simulate",
            &config,
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let log_a = std::fs::read(a.join("log.csv")).unwrap();
    let log_b = std::fs::read(b.join("log.csv")).unwrap();
    assert!(!log_a.is_empty());
    assert_eq!(log_a, log_b);
    assert!(a.join("run.toml").exists());
    assert!(a.join("summary.toml").exists());

    let c = dir.path().join("c");
    let o = aeromanip(&[
        "simulate",
        &config,
        "--seed",
        "12",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_ne!(log_a, std::fs::read(c.join("log.csv")).unwrap());
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_run(dir.path());
    let out_dir = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_aeromanip"))
        .args(["simulate", &config, "--duration", "0.05"])
        .env("AEROMANIP_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(out_dir.join("log.csv")).unwrap();
    // header plus 50 ticks
    assert_eq!(log.lines().count(), 51);
}

#[test]
fn analyze_and_plots_read_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_run(dir.path());
    let run = dir.path().join("run");
    assert!(
        aeromanip(&["simulate", &config, "--out", run.to_str().unwrap()])
            .status
            .success()
    );

    let summary = aeromanip(&["analyze", run.to_str().unwrap()]);
    assert!(summary.status.success(), "{}", stderr(&summary));
    assert!(stdout(&summary).contains("[force]"));

    let figures = dir.path().join("figures");
    let o = aeromanip(&[
        "plots",
        run.join("log.csv").to_str().unwrap(),
        "--out",
        figures.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["plot.py", "log.csv", "summary.toml"] {
        assert!(figures.join(name).exists(), "{name}");
    }
}

#[test]
fn analyze_of_missing_run_is_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = aeromanip(&["analyze", dir.path().join("nothing").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
