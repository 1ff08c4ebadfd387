//! End-to-end runs of the `qkdsim` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim")).args(args).output().expect("spawn qkdsim")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_key_exits_one_and_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bad.cfg", "preset = gys\n\n[estimator]\nfooo = 1\n");
    let o = qkdsim(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("line 4") && msg.contains("fooo"), "{msg}");
}

#[test]
fn negative_mu_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "mu.cfg", "preset = gys\n[intensity]\nmu = -1\n");
    let o = qkdsim(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mu"));
}

#[test]
fn missing_config_names_path() {
    let o = qkdsim(&["run", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/x.cfg"));
}

#[test]
fn unwritable_output_names_path() {
    let o = qkdsim(&["rate", "--preset", "gys", "--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/dir/out.csv"));
}

#[test]
fn sweep_csv_has_header_and_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = qkdsim(&["sweep", "--preset", "gys", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.split('\n').collect();
    assert_eq!(lines[0], "km,mu,gain,qber,y1_low,e1_high,rate,status");
    // 0..150 km in 10 km steps, then the empty string after the final newline.
    assert_eq!(lines.len(), 16 + 2);
    assert_eq!(*lines.last().unwrap(), "");
    assert!(!text.contains('\r'));
    let first: Vec<&str> = lines[1].split(',').collect();
    let rate: f64 = first[6].parse().unwrap();
    assert!((rate / 2.55e-3 - 1.0).abs() < 0.02, "{rate}");
}

#[test]
fn output_is_byte_identical_across_runs_and_jobs() {
    let one = qkdsim(&["sweep", "--preset", "pdc144", "--jobs", "1"]);
    let again = qkdsim(&["sweep", "--preset", "pdc144", "--jobs", "1"]);
    let many = qkdsim(&["sweep", "--preset", "pdc144", "--jobs", "4"]);
    assert_eq!(one.status.code(), Some(0));
    assert!(!one.stdout.is_empty());
    assert_eq!(one.stdout, again.stdout);
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn verify_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "v.cfg", "preset = gys\ntask = verify\n[verify]\ncases = 20\nn_pulses = 20000\n");
    let a = qkdsim(&["verify", "--config", cfg.to_str().unwrap(), "--seed", "7"]);
    let b = qkdsim(&["verify", "--config", cfg.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
}

#[test]
fn empty_sweep_is_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "e.cfg", "preset = gys\n[sweep]\nstart = 5\nstop = 1\n");
    let o = qkdsim(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "km,mu,gain,qber,y1_low,e1_high,rate,status\n");
}

#[test]
fn insecure_everywhere_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "far.cfg",
        "preset = gys\n[estimator]\nmethod = nondecoy\n[intensity]\npolicy = transmittance\n[sweep]\npoints = 100, 120\n",
    );
    let o = qkdsim(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn presets_lists_both() {
    let o = qkdsim(&["presets"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("gys:") && text.contains("pdc144:"));
}

#[test]
fn shipped_scenarios_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            qkd_cli::load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 13);
}
