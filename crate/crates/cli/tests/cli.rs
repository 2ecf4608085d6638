use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_hrenorm");

fn hrenorm(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("HR_THREADS").output().unwrap()
}

fn hrenorm_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("HR_THREADS", threads).output().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

const LINEAR_FAMILY: &str = r#"{
  "coords": [
    {"degs": [1, 0, 0], "coeffs": [[[0.0]], [[2.0]]]},
    {"degs": [0, 1, 0], "coeffs": [[[0.0], [0.1]]]}
  ],
  "box": [-3, 3, -3, 3],
  "param": "mu"
}"#;

#[test]
fn lyapunov_reports_exponent_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ly");
    let o = hrenorm(&["lyapunov", "--iterations", "1000000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &read_json(&out.join("lyapunov.json"))["result"];
    let le = r["lyapunov"]["mean"].as_f64().unwrap();
    assert!((le - 0.419).abs() < 3e-3, "{le}");
    let budget = r["budget"].as_f64().unwrap();
    assert!((budget - (3.0 - 0.3f64.ln() / le)).abs() < 1e-9);
    let blocks = std::fs::read_to_string(out.join("blocks.csv")).unwrap();
    assert_eq!(blocks.lines().count(), 11);
    let meta = read_json(&out.join("meta.json"));
    assert_eq!(meta["command"], "lyapunov");
    assert!(meta["threads"].as_u64().unwrap() >= 1);
}

#[test]
fn renorm_writes_decaying_delta_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rn");
    let o = hrenorm(&["renorm", "--n", "5..12", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r = &read_json(&out.join("renorm.json"))["result"];
    assert!(r["delta_profile"]["slope"]["slope"].as_f64().unwrap() < 0.0);
    assert_eq!(r["delta_profile"]["monotone"], true);
    let mut rdr = csv::Reader::from_path(out.join("delta.csv")).unwrap();
    let deltas: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(deltas.len(), 8);
    assert!(deltas.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let fam = dir.path().join("linear.json");
    std::fs::write(&fam, LINEAR_FAMILY).unwrap();
    let common = |r: &str, out: &str| {
        let o = dir.path().join(out);
        hrenorm(&[
            "certify",
            "--family",
            fam.to_str().unwrap(),
            "--a",
            "0",
            "--box=-1,1,-1,1",
            "--tags",
            "M,D_r,R",
            "--C",
            "0.5",
            "--Lambda",
            "1.5",
            "--k-max",
            "10",
            "--cone",
            "0.3",
            "--r",
            r,
            "--out",
            o.to_str().unwrap(),
        ])
    };
    assert_eq!(common("4", "pass").status.code(), Some(0));
    let fail = common("8", "fail");
    assert_eq!(fail.status.code(), Some(2));
    let r = read_json(&dir.path().join("fail/certify.json"));
    assert_eq!(r["result"]["pass"], false);
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u");
    let out = out.to_str().unwrap();
    assert_eq!(hrenorm(&["lyapunov", "--bogus", "--out", out]).status.code(), Some(64));
    assert_eq!(hrenorm(&["certify", "--C", "-1", "--out", out]).status.code(), Some(64));
    assert_eq!(hrenorm(&["lyapunov", "--family", "no-such-family", "--out", out]).status.code(), Some(64));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"command": {"name": "lyapunov", "bogus": 1}}"#).unwrap();
    assert_eq!(hrenorm(&["run", bad.to_str().unwrap()]).status.code(), Some(64));
    let o = hrenorm_threads("zero", &["lyapunov", "--iterations", "1000", "--out", out]);
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("HR_THREADS"));
    assert_eq!(hrenorm(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_config_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = dir.path().join("cfg.json");
    let text = serde_json::json!({
        "command": {"name": "lyapunov", "iterations": 100000, "transient": 500},
        "out": b,
    });
    std::fs::write(&cfg, text.to_string()).unwrap();
    let o = hrenorm(&["run", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = hrenorm(&["lyapunov", "--iterations", "100000", "--transient", "500", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    let ra = read_json(&a.join("lyapunov.json"));
    let rb = read_json(&b.join("lyapunov.json"));
    assert_eq!(ra["result"], rb["result"]);
    assert_eq!(rb["config"]["command"]["transient"], 500);
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("det");
    let o = out.to_str().unwrap();
    let args = ["charts", "--a=-2", "--b", "0.05", "--period", "2", "--seed-point", "0.62,0", "--random-inits", "2", "--seed", "7", "--out", o];
    let mut docs = Vec::new();
    for threads in ["1", "4"] {
        let r = hrenorm_threads(threads, &args);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        docs.push((std::fs::read(out.join("charts.json")).unwrap(), std::fs::read(out.join("system.json")).unwrap()));
        let meta = read_json(&out.join("meta.json"));
        assert_eq!(meta["threads"].as_u64().unwrap().to_string(), threads);
    }
    assert_eq!(docs[0], docs[1]);
    let args = ["renorm", "--n", "5..9", "--out", o];
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        assert!(hrenorm_threads(threads, &args).status.success());
        tables.push((std::fs::read(out.join("renorm.json")).unwrap(), std::fs::read(out.join("delta.csv")).unwrap()));
    }
    assert_eq!(tables[0], tables[1]);
}
