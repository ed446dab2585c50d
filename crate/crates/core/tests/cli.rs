use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fiberwave::dataset::{read_shard_manifest, read_wds, regenerate_shard};

fn fiberwave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiberwave"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("run fiberwave")
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn zero_spans_is_back_to_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = fiberwave(dir.path(), &["simulate", "--spans", "0", "--channels", "1", "--symbols", "640"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("simulate/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["linear"]["ber_q"]["n_errors"], 0);
    assert!(dir.path().join("simulate/resolved_config.json").exists());
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--spans", "1", "--channels", "1", "--symbols", "640", "--seed", "3"];
    for d in [&a, &b] {
        assert!(fiberwave(d.path(), &args).status.success());
    }
    for name in ["spans/span1_seed3.wfld", "spans/span1_seed3.wfld.json", "spans/index.json", "metrics.json"] {
        let x = fs::read(a.path().join("simulate").join(name)).unwrap();
        let y = fs::read(b.path().join("simulate").join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), r#"{"wdm": {"chanels": 5}}"#);
    let out = fiberwave(dir.path(), &["simulate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chanels"));
    let missing = dir.path().join("absent.json");
    assert_eq!(fiberwave(dir.path(), &["evaluate", "--config", missing.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(fiberwave(dir.path(), &["evaluate", "--candidate", "wobble"]).status.code(), Some(2));
    let ext = dir.path().join("nowhere");
    let arg = format!("external:{}", ext.display());
    let out = fiberwave(dir.path(), &["evaluate", "--spans", "1", "--channels", "1", "--symbols", "640", "--candidate", &arg]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn evaluate_self_writes_zero_error_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = fiberwave(dir.path(), &["evaluate", "--spans", "2", "--channels", "1", "--symbols", "640", "--candidate", "self"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("evaluate/curves.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn fdd_dataset_for_five_channels_uses_45_symbol_windows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"num_symbols": 640, "link": {"num_spans": 1},
            "dataset": {"mode": "FDD", "layout": "FLAT", "taps": [1], "seeds": [4]}}"#,
    );
    let out = fiberwave(dir.path(), &["dataset", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let shard = dir.path().join("dataset/seed4_span1.wds");
    let file = read_wds(&shard).unwrap();
    assert_eq!(file.header.window_length, 45);
    assert_eq!(file.header.d, 80);
    assert_eq!(file.header.b, 640);
    let manifest = read_shard_manifest(&shard).unwrap();
    assert_eq!(manifest.input_shape, vec![640, 45 * 80]);
    let again = regenerate_shard(&manifest).unwrap();
    assert_eq!(again.inputs_tensor(), file.inputs);
    assert_eq!(again.targets_tensor(), file.targets);
}
