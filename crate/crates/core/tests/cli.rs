use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use brinkman::config::RunConfig;
use brinkman::io::read_field;

fn brinkman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brinkman"))
        .args(args)
        .env("BRINKMAN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Small 1D config with `extra` spliced into the sections; output under `dir`.
fn write_config(dir: &Path, omega0: &str, klevel_extra: &str) -> PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"
[output]
dir = "{}"

[grid]
dim = 1
extent = 8.0
n_cells = 256

[law]
kind = "linear"
alpha = 1.0
p_max = 1.0

[omega0]
{omega0}

[klevel]
k = 40.0
t_end = 0.2
snapshot_times = [0.1, 0.2]
{klevel_extra}

[limit]
t_end = 0.2
snapshot_times = [0.1, 0.2]

[harness]
ks = [20.0, 80.0]
times = [0.2]
delta = 0.2
"#,
        out.display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const BALL: &str = "shape = \"ball\"\ncenters = [4.0]\nradii = [1.0]";

#[test]
fn missing_config_is_a_config_error() {
    let out = brinkman(&["klevel", "/nonexistent/run.toml"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bad_usage_is_a_config_error() {
    assert_eq!(code(&brinkman(&["frobnicate"])), 1);
    assert_eq!(code(&brinkman(&[])), 1);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), BALL, "bogus = 1");
    assert_eq!(code(&brinkman(&["klevel", path.to_str().unwrap()])), 1);
}

#[test]
fn klevel_run_writes_snapshots_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), BALL, "");
    let out = brinkman(&["klevel", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let run_dir = dir.path().join("out/klevel");
    let csv = std::fs::read_to_string(run_dir.join("snapshots.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let p = read_field(run_dir.join("p_0001.blf")).unwrap();
    assert_eq!(p.grid().n_cells(), 256);
    assert!(p.min() >= 0.0 && p.max() <= 1.0);

    let echoed = RunConfig::load(run_dir.join("config.toml")).unwrap();
    assert_eq!(echoed, RunConfig::load(&path).unwrap());
}

#[test]
fn excessive_cfl_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), BALL, "cfl = 2.0");
    assert_eq!(code(&brinkman(&["klevel", path.to_str().unwrap()])), 2);
}

#[test]
fn empty_region_limit_run_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "shape = \"empty\"", "");
    let out = brinkman(&["limit", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("out/limit");
    for name in ["p_0001.blf", "w_0001.blf"] {
        let f = read_field(run_dir.join(name)).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0), "{name}");
    }
}

#[test]
fn seed_near_the_seam_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "shape = \"ball\"\ncenters = [1.0]\nradii = [0.5]", "");
    assert_eq!(code(&brinkman(&["limit", path.to_str().unwrap()])), 2);
}

#[test]
fn converge_checks_the_ladder_and_band() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), BALL, "");
    let p = path.to_str().unwrap();
    assert_eq!(code(&brinkman(&["converge", p, "--ks", "20"])), 1);
    assert_eq!(code(&brinkman(&["converge", p, "--delta", "0.01"])), 2);

    let out = brinkman(&["converge", p, "--ks", "20,80", "--times", "0.1,0.2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("out/converge/report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), brinkman::harness::REPORT_HEADER);
    assert_eq!(report.lines().count(), 1 + 4);
}

#[test]
fn selftest_passes() {
    let out = brinkman(&["selftest", "--seed", "7"]);
    assert_eq!(code(&out), 0);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().all(|l| l.contains("PASS")));
}
