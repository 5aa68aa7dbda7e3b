use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_volterra-lab"));
    c.env_remove("VOLTERRA_LAB_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_column(path: &Path, col: usize) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn simulate_reference_step_matches_exponential() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.toml"), "[grid]\nh = 0.05\nn = 20\n[signals]\nstep = 0.7\n").unwrap();
    let o = run(d.path(), &["simulate", "--config", "run.toml", "--out", "res"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_column(&d.path().join("res/response.csv"), 0);
    let y = read_column(&d.path().join("res/response.csv"), 1);
    assert_eq!(y.len(), 21);
    for (t, y) in t.iter().zip(&y) {
        assert!((y - (0.7 * t).exp_m1()).abs() < 1e-12, "t = {t}: {y}");
    }
    assert!(d.path().join("res/run.log").exists());
}

#[test]
fn optimize_3sq_reports_known_optimum() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["optimize", "--problem", "3sq", "--B", "1", "--T", "1", "--out", "o"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("0.8660"), "{s}");
    assert!(s.contains("B³T³/24"), "{s}");
    let amps = read_column(&d.path().join("o/optimize.csv"), 1);
    assert!((amps[0].abs() - 0.75f64.sqrt()).abs() < 1e-3);
    assert!(s.contains("0.04166"), "{s}");
}

#[test]
fn malformed_config_fails_without_output() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "[grid]\nh = \"fast\"\n").unwrap();
    let o = run(d.path(), &["simulate", "--config", "bad.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("o").exists());

    let o = run(d.path(), &["simulate", "--config", "missing.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(4));

    std::fs::write(d.path().join("ref.toml"), "[signals]\ninput = \"nowhere.csv\"\n").unwrap();
    let o = run(d.path(), &["simulate", "--config", "ref.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("o").exists());
}

#[test]
fn grid_mismatch_is_reported() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["signals", "--h", "0.1", "--n", "8", "--out", "sig"]);
    assert!(o.status.success());
    std::fs::write(d.path().join("run.toml"), "[signals]\ninput = \"sig/signal_0.csv\"\n").unwrap();
    let o = run(d.path(), &["simulate", "--config", "run.toml", "--n", "9", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["simulate", "--config", "run.toml", "--h", "0.1", "--n", "8", "--out", "o"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn identify_then_simulate_round_trip() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("id.toml"),
        "[grid]\nh = 0.1\nn = 8\n[model]\nreference_order = 2\namplitudes = [0.5, -0.5]\n",
    )
    .unwrap();
    let o = run(d.path(), &["identify", "--config", "id.toml", "--out", "k"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(
        d.path().join("sim.toml"),
        "[grid]\nh = 0.1\nn = 8\n[model]\nsource = \"files\"\nkernel_dir = \"k\"\n[signals]\nstep = 0.3\n",
    )
    .unwrap();
    let o = run(d.path(), &["simulate", "--config", "sim.toml", "--out", "s"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_column(&d.path().join("s/response.csv"), 0);
    let y = read_column(&d.path().join("s/response.csv"), 1);
    for (t, y) in t.iter().zip(&y) {
        let th = 0.3 * t;
        assert!((y - (th + th * th / 2.0)).abs() < 1e-10, "t = {t}");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = run(d.path(), &["control", "--h", "1", "--n", "20", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["control.csv", "output.csv", "eps.csv", "run.log"] {
        let a = std::fs::read(d.path().join("a").join(f)).unwrap();
        let b = std::fs::read(d.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let o = bin()
        .current_dir(d.path())
        .env("VOLTERRA_LAB_THREADS", "1")
        .args(["control", "--h", "1", "--n", "20", "--out", "c"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(d.path().join("a/control.csv")).unwrap(),
        std::fs::read(d.path().join("c/control.csv")).unwrap()
    );
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = bin().current_dir(d.path()).env("VOLTERRA_LAB_THREADS", "0").args(["signals"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lambert_range_writes_residuals() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["lambert", "--branch", "-1", "--from", "-0.3", "--to", "-0.01", "--count", "5", "--out", "l"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let w = read_column(&d.path().join("l/lambert.csv"), 1);
    let r = read_column(&d.path().join("l/lambert.csv"), 2);
    assert_eq!(w.len(), 5);
    assert!(w.iter().all(|&w| w <= -1.0));
    assert!(r.iter().all(|r| r.abs() < 1e-12));
    // Outside the real domain: a numerical failure, not a config error.
    let o = run(d.path(), &["lambert", "--y", "-1", "--out", "bad"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!d.path().join("bad").exists());
}

#[test]
fn paper_suite_json_and_tampered_tolerance() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["paper-suite", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).expect("json");
    let checks = v.as_array().unwrap();
    assert!(checks.len() > 20);
    let status = |id: &str| {
        checks.iter().find(|c| c["id"] == id).unwrap()["status"].as_str().unwrap().to_string()
    };
    assert_eq!(status("1.identity"), "pass");
    let any_fail = checks.iter().any(|c| c["status"] == "fail");
    assert_eq!(o.status.code(), Some(if any_fail { 1 } else { 0 }));

    let o = run(d.path(), &["paper-suite", "--json", "--lambert-tol", "1e-30"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let id = v.as_array().unwrap().iter().find(|c| c["id"] == "1.identity").unwrap();
    assert_eq!(id["status"], "fail");
}
