use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moller-lab"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, cmd: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(format!("{cmd}.json"))).unwrap()).unwrap()
}

/// A copy of a shipped config with text substitutions, in `dir`.
fn variant(dir: &Path, name: &str, subs: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(config(name)).unwrap();
    for (a, b) in subs {
        assert!(text.contains(a), "{a} not in {name}");
        text = text.replace(a, b);
    }
    let p = dir.join(format!("variant_{name}"));
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn check_passes_and_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check"], &config("dirac_default.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "check");
    assert_eq!(r["passed"], true);
    assert_eq!(r["results"]["systems"]["g1"]["S"]["passed"], true);
    assert!(r["results"]["systems"]["g1"]["H"]["value"].as_f64().unwrap() > 0.0);
    let text = std::fs::read_to_string(dir.path().join("check.json")).unwrap();
    assert!(!text.contains("generated"));
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("check.meta.json")).unwrap()).unwrap();
    assert!(meta["generated_unix_seconds"].as_u64().unwrap() > 0);
}

#[test]
fn negative_control_exits_with_threshold_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "negative_control.toml", &[("[output]", "[samples]\ncount = 2\n\n[output]")]);
    let o = run(&["conserve", "--no-rho"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    let r = report(dir.path(), "conserve");
    assert_eq!(r["rho"], "one");
    assert!((r["results"]["mean_ratio"].as_f64().unwrap() - 4.0).abs() < 1e-3);
    assert!(dir.path().join("conserve_pairs.csv").exists());
    let o = run(&["conserve"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("t_minus = -1.0", "t_minus = -2.5", "t0 < t_minus"),
        ("t_plus = 1.0", "t_plus = 2.5", "t_plus < t1"),
        ("nx = 64", "nx = 60", "power of two"),
        ("a = \"1\"", "a = \"1 + sinh(x)\"", "sinh"),
    ];
    for (a, b, msg) in cases {
        let cfg = variant(dir.path(), "dirac_default.toml", &[(a, b)]);
        let o = run(&["check"], &cfg, dir.path());
        assert_eq!(o.status.code(), Some(2));
        let err: Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"], "config");
        assert!(err["message"].as_str().unwrap().contains(msg), "{err}");
    }
    let o = run(&["state"], &config("dirac_default.toml"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "unsupported");
}

#[test]
fn identical_metrics_give_vanishing_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "dirac_identity.toml", &[("[output]", "[samples]\ncount = 2\n\n[output]")]);
    let o = run(&["moller"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &report(dir.path(), "moller")["results"];
    for key in ["max_intertwining_residual", "max_roundtrip_residual", "reverse_roundtrip_residual"] {
        assert!(r[key].as_f64().unwrap() < 1e-8, "{key}: {r}");
    }
}

#[test]
fn overrides_change_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--fd4", "--cfl", "0.2"], &config("dirac_default.toml"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "solve");
    assert_eq!(r["grid"]["deriv"], "fd4");
    assert_eq!(r["grid"]["cfl"], 0.2);
    assert!(dir.path().join("solve_drift.csv").exists());
}
