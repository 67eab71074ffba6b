use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cli(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlasov-yukawa"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

/// A small, quick configuration on top of the desk preset.
const SMALL: &str = "half_width = 40.0\ngrid_len = 321\nt_max = 4.0\ntime_nodes = 5\nnodes_per_unit = 6\nn_max = 3\nladder_times = 1\nladder_points = 1\noracle_dt = 0.05\n";

fn write_config(dir: &TempDir, body: &str) -> String {
    let path = dir.path().join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn verify_lemmas_writes_reports() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["verify-lemmas", "--paths", "10"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("[PASS]").count(), 4);
    for f in ["coefficients.csv", "binomial_sums.csv", "time_integral.csv", "comparison.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.starts_with("lemma,n,t,tuple,lhs,rhs,margin\n"), "{f}");
        assert!(text.lines().count() > 1);
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify_lemmas.json")).unwrap()).unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn invalid_charge_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "q = 0.5\n");
    let out = cli(&["--config", &cfg, "simulate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q must be"));
}

#[test]
fn unknown_key_and_missing_history_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "not_a_key = 1\n");
    assert_eq!(cli(&["--config", &cfg, "free-stream"], dir.path()).status.code(), Some(2));
    assert_eq!(cli(&["--desk", "decay-report"], dir.path()).status.code(), Some(2));
    assert_eq!(cli(&["no-such-command"], dir.path()).status.code(), Some(2));
}

#[test]
fn zero_amplitude_is_a_trivial_fixed_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &format!("{SMALL}amplitude = 0.0\n"));
    let out = cli(&["--desk", "--config", &cfg, "simulate"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let hist = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    for line in hist.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[2..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn simulate_then_reports_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let run = cli(&["--desk", "--config", &cfg, "--jobs", "1", "simulate"], out);
        assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    }
    for f in ["history.csv", "decay.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let decay = cli(&["--desk", "--config", &cfg, "decay-report"], &a);
    assert_eq!(decay.status.code(), Some(0));
    let oracle = cli(&["--desk", "--config", &cfg, "oracle-compare"], &a);
    assert_eq!(oracle.status.code(), Some(0), "{}", String::from_utf8_lossy(&oracle.stdout));
    assert!(a.join("oracle_comparison.csv").exists());
    let free = cli(&["--desk", "--config", &cfg, "free-stream"], &a);
    assert_eq!(free.status.code(), Some(0));
    let density = fs::read_to_string(a.join("free_stream_density.csv")).unwrap();
    assert!(density.starts_with("t,x,rho,d1rho,d2rho,d3rho\n"));
}
