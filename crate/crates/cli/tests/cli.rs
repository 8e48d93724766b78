use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gdm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdm")).current_dir(dir).args(args).output().expect("gdm runs")
}

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

fn error_code(out: &Output) -> String {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).expect("structured error on stderr");
    assert_eq!(v["schema"], 1);
    v["error"]["code"].as_str().unwrap().to_string()
}

#[test]
fn systems_lists_every_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdm(dir.path(), &["systems"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    let kinds: Vec<&str> = v["kinds"].as_array().unwrap().iter().map(|k| k["kind"].as_str().unwrap()).collect();
    for k in ["adf", "kusuoka", "minkowski", "moebius", "hata", "toy:three_state"] {
        assert!(kinds.contains(&k), "{k} missing");
    }
}

#[test]
fn eval_prints_exact_minkowski_values() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "m.json", r#"{"kind": "minkowski"}"#);
    let out = gdm(dir.path(), &["eval", "--system", "m.json", "--points", "1/4,1/2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1/4,1/3"), "{text}");
    assert!(text.contains("1/2,1/2"), "{text}");
}

#[test]
fn unknown_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"kind": "adf", "params": {"y1": "0"}}"#);
    let out = gdm(dir.path(), &["dim", "--system", "bad.json", "--out", "r.json", "--manifest", "m.json"]);
    assert_eq!(error_code(&out), "config");
    assert!(!dir.path().join("r.json").exists());
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn inapplicable_method_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "m.json", r#"{"kind": "minkowski"}"#);
    let out = gdm(dir.path(), &["dim", "--system", "m.json", "--method", "fanlau", "--out", "r.json"]);
    assert_eq!(error_code(&out), "inapplicable");
    assert!(!dir.path().join("r.json").exists());
    let out = gdm(dir.path(), &["dim", "--system", "m.json", "--method", "closed"]);
    assert_eq!(error_code(&out), "inapplicable");
}

#[test]
fn mc_is_refused_for_hata() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "h.json", r#"{"kind": "hata", "params": {"h_modulus_sq": 3, "alpha_modulus_sq": 0.5}}"#);
    let out = gdm(dir.path(), &["dim", "--system", "h.json"]);
    assert_eq!(error_code(&out), "inapplicable");
    let out = gdm(dir.path(), &["dim", "--system", "h.json", "--method", "closed"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn manifest_records_digests_but_not_threads() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.json", r#"{"kind": "adf"}"#);
    let out = gdm(
        dir.path(),
        &["--threads", "2", "dim", "--system", "a.json", "--n", "200", "--paths", "10", "--out", "r.json", "--manifest", "m.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "dim");
    assert_eq!(m["seed"], 0);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["outputs"][0]["path"], "r.json");
    assert!(!String::from_utf8(std::fs::read(dir.path().join("m.json")).unwrap()).unwrap().contains("threads"));
}

#[test]
fn singularity_on_equivalence_system_is_ac_certified() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "e.json", r#"{"kind": "bernoulli_equivalence", "params": {"p": ["1/3", "2/3"], "e0": "1"}}"#);
    let out = gdm(dir.path(), &["singularity", "--system", "e.json", "--bernoulli", "1/3,2/3", "--T", "1000", "--paths", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "AC_CERTIFIED");
    assert!(v["certificate"].is_null());
    let out = gdm(dir.path(), &["singularity", "--system", "e.json", "--T", "1000", "--paths", "10"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "SINGULAR_CERTIFIED");
}

#[test]
fn bad_bernoulli_length_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.json", r#"{"kind": "adf"}"#);
    let out = gdm(dir.path(), &["singularity", "--system", "a.json", "--bernoulli", "1/3,1/3,1/3"]);
    assert_eq!(error_code(&out), "config");
}
