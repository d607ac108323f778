use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--M", "10", "--N", "16", "--fine-M", "20", "--fine-N", "32", "--levels", "1", "--max-iters", "10",
    "--coarse-max-iters", "20",
];

fn subdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subdiff")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn invert(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["invert", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    subdiff(&args)
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for extra in [&["--alpha", "1.5"][..], &["--fine-N", "24"], &["--example", "nope"], &["--T0", "2"]] {
        let o = invert(dir.path(), extra);
        assert_eq!(code(&o), 2, "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&subdiff(&["invert", "--bogus"])), 2);
    assert_eq!(code(&subdiff(&["table", "--preset", "rate"])), 2);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha": 0.5, "mu": 3}"#).unwrap();
    let o = subdiff(&["invert", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invert_writes_outputs_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = ["--eps", "1e-2", "--gamma", "1e-8", "--seed", "7"];
    for d in [a.path(), b.path()] {
        let o = invert(d, &extra);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["results.csv", "result.json", "iterations.jsonl", "observations.csv", "observations.json", "mesh.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let rows = subdiff::io::parse_results_csv(&std::fs::read_to_string(a.path().join("results.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].m, rows[0].n, rows[0].seed), (10, 16, 7));
    assert!(rows[0].delta_realized > 0.0 && rows[0].e_q.is_finite());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha": 0.25, "seed": 4}"#).unwrap();
    let o = invert(dir.path(), &["--config", cfg.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = subdiff::io::parse_results_csv(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!((rows[0].alpha, rows[0].seed), (0.25, 5));
}

#[test]
fn solve_forward_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = subdiff(&["solve-forward", "--M", "8", "--N", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 5 * 7);
    assert!(dir.path().join("mesh.json").exists() && dir.path().join("forward.json").exists());
}

#[test]
fn selftest_passes() {
    let o = subdiff(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().all(|l| l.starts_with("PASS")));
}
