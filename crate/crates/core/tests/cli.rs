use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_afdm-isac"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn afdm-isac")
}

fn scene(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes").join(name).display().to_string()
}

#[test]
fn missing_scene_exits_2_and_names_path() {
    for args in [
        vec!["crlb", "--scene", "does/not/exist.scene"],
        vec!["sweep", "--scene", "does/not/exist.scene", "--trials", "1"],
        vec!["simulate", "--scene", "does/not/exist.scene", "--out", "unused.tns"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("does/not/exist.scene"));
    }
}

#[test]
fn missing_tensor_exits_2() {
    let out = run(&["estimate", "no_such_tensor.tns"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_rank_is_rejected() {
    let out = run(&["estimate", "x.tns", "--rank", "zero"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_then_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tns = dir.path().join("desk.tns");
    let tns_s = tns.to_str().unwrap();
    let out = run(&["simulate", "--scene", &scene("desk.scene"), "--snr", "30", "--seed", "4", "--out", tns_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tns.exists());
    assert!(dir.path().join("desk.tns.scene").exists());

    let out = run(&["estimate", tns_s, "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rank"], 3);
    assert_eq!(v["targets"].as_array().unwrap().len(), 3);
    for p in ["theta", "phi", "tau", "f_d"] {
        let e = v["nmse"][p].as_f64().unwrap();
        assert!(e < 1e-3, "{p}: {e}");
    }

    let out = run(&["estimate", tns_s, "--rank", "mdl", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("target,theta,phi,tau,f_d,beta,nu"));
}

#[test]
fn crlb_outputs_six_bound_vectors() {
    let out = run(&["crlb", "--scene", &scene("desk.scene"), "--snr", "15"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let b = v["bounds"].as_object().unwrap();
    assert_eq!(b.len(), 6);
    for (_, vals) in b {
        assert_eq!(vals.as_array().unwrap().len(), 3);
    }
    // far-field targets have no range bound
    assert!(b["r0"][1].is_null());
    assert!(b["theta"][0].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_writes_requested_files() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("run");
    let out = run(&[
        "sweep", "--scene", &scene("desk.scene"), "--snr", "10,20", "--trials", "4", "--seed", "9",
        "--out", prefix.to_str().unwrap(), "--format", "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = afdm_isac::harness::read_csv(&prefix.with_extension("csv")).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(!prefix.with_extension("json").exists());
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
