use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chemomech::cli_io::{read_diagnostics, read_snapshot, Mode, ProblemConfig};

const BIN: &str = env!("CARGO_BIN_EXE_chemomech");

const EQUILIBRIUM: &str = r#"
dimension = 1
[mesh]
elements = [6]
[material]
permeability = 0.5
[time]
t_end = 1.0
dt = 0.1
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("CHEMOMECH_OUT_DIR")
        .output()
        .unwrap()
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn check_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "dimension = 1\n[mesh]\nelements = [8]\n");
    let out = dir.path().join("out");
    let o = run("check", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["outcome"]["status"], "success");
    assert_eq!(r["summary"]["passed"], true);
    assert!(out.join("check.json").exists());
}

#[test]
fn equilibrium_run_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eq.toml", EQUILIBRIUM);
    let out = dir.path().join("out");
    let o = run("dynamic", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_diagnostics(&out.join("diagnostics.csv")).unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0].t, 0.0);
    for r in &rows {
        assert!(r.balance_residual.abs() <= 1e-12);
        assert!(r.kinetic.abs() <= 1e-12);
        assert!((r.stored - rows[0].stored).abs() <= 1e-12);
        assert!((r.mass - rows[0].mass).abs() <= 1e-12);
    }
    // identity deformation: y equals x at every quadrature point
    for s in read_snapshot(&out.join("snapshot_10.csv")).unwrap() {
        assert!((s.y[0] - s.x[0]).abs() <= 1e-10 && (s.det_f - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn infeasible_static_start_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = "dimension = 1\n[mesh]\nelements = [4]\n[initial.deformation]\nkind = \"stretch\"\nfactors = [-1.0]\n";
    let cfg = write(dir.path(), "s.toml", text);
    let out = dir.path().join("out");
    let o = run("static", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("InfeasibleStart"));
    assert_eq!(report(&out)["outcome"]["class"], "InfeasibleStart");
}

#[test]
fn misspelled_key_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &EQUILIBRIUM.replace("permeability", "permeablity"));
    let out = dir.path().join("out");
    let o = run("dynamic", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["outcome"]["class"], "ParseError");
    assert!(r["outcome"]["message"].as_str().unwrap().contains("permeablity"));
}

#[test]
fn barrier_exponent_violation_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = "dimension = 2\n[mesh]\nelements = [2]\n[material]\nbarrier_exponent = 3.0\nstatic_exponent = 4.0\n";
    let cfg = write(dir.path(), "q.toml", text);
    let out = dir.path().join("out");
    let o = run("static", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&out)["outcome"]["class"], "ValidationError");
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("dynamic", &dir.path().join("nope.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn echoed_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eq.toml", EQUILIBRIUM);
    let out = dir.path().join("out");
    assert_eq!(run("dynamic", &cfg, &out, &["--seed", "7"]).status.code(), Some(0));
    let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let parsed = ProblemConfig::from_toml(&echo).unwrap();
    assert_eq!(parsed.seed, 7);
    assert_eq!(parsed.clone().resolve(Mode::Dynamic).unwrap(), parsed);
    let from_report: ProblemConfig = serde_json::from_value(report(&out)["config"].clone()).unwrap();
    assert_eq!(from_report, parsed);
}

#[test]
fn runs_are_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
dimension = 1
[mesh]
elements = [8]
[material]
permeability = 1.0
[loads]
mu_ext = [[0.0, 0.2], [0.1, -0.1]]
[loads.traction.right]
kind = "harmonic"
value = [0.05]
frequency = 2.0
[initial.concentration]
kind = "sinusoidal"
mean = 0.5
amplitude = 0.05
mode = 2
[time]
t_end = 0.2
dt = 0.02
scheme = "midpoint"
"#;
    let cfg = write(dir.path(), "d.toml", text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("dynamic", &cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run("dynamic", &cfg, &b, &[]).status.code(), Some(0));
    for f in ["diagnostics.csv", "snapshot_10.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let rows = read_diagnostics(&a.join("diagnostics.csv")).unwrap();
    assert!(rows.iter().all(|r| r.min_det > 0.0));
    assert!(rows[1].dissipated_step >= 0.0);
}

#[test]
fn out_dir_env_is_used_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eq.toml", EQUILIBRIUM);
    let out = dir.path().join("env-out");
    let o = Command::new(BIN)
        .args(["dynamic", "--config"])
        .arg(&cfg)
        .env("CHEMOMECH_OUT_DIR", &out)
        .env("CHEMOMECH_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("diagnostics.csv").exists());
}
