use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_disep"));
    c.env_remove("DISEP_OUT_DIR");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).arg("--out-dir").arg(dir).arg("--quiet").output().unwrap()
}

fn close(a: &Value, b: &Value, path: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{path}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}");
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                close(p, q, &format!("{path}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.len(), y.len(), "{path}");
            for (k, v) in y {
                close(&x[k], v, &format!("{path}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn golden_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", fixture("golden_small.json").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["waveforms.csv", "profile.json", "spectrum.csv", "losses.json", "summary.json", "traces.csv", "commands.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    for f in ["summary.json", "profile.json"] {
        let got: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(f)).unwrap()).unwrap();
        let want: Value = serde_json::from_str(&fs::read_to_string(fixture("golden").join(f)).unwrap()).unwrap();
        close(&got, &want, f);
    }
    let wave = fs::read_to_string(dir.path().join("waveforms.csv")).unwrap();
    assert!(wave.starts_with("t_s,v_out_v,i_out_a\n"));
    assert_eq!(wave.lines().count(), 1 + 12 * 667);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let scenario = fixture("golden_small.json");
    for d in [&a, &b] {
        assert!(run_in(d.path(), &["run", scenario.to_str().unwrap()]).status.success());
    }
    for f in ["waveforms.csv", "traces.csv", "spectrum.csv", "losses.json", "summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("golden_small.json")).unwrap();

    let bad = dir.path().join("bad.json");
    fs::write(&bad, text.replace("\"r_load\": 100.0", "\"r_load\": -5.0")).unwrap();
    let out = run_in(dir.path(), &["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r_load"));

    fs::write(&bad, text.replace("\"f_carrier\"", "\"f_carier\"")).unwrap();
    let out = run_in(dir.path(), &["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("f_carier") && err.contains("line"), "{err}");

    let out = run_in(dir.path(), &["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unsettled_run_exits_with_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("golden_small.json")).unwrap();
    let short = dir.path().join("short.json");
    fs::write(&short, text.replace("\"periods\": 12", "\"periods\": 1")).unwrap();
    let out = run_in(dir.path(), &["run", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("waveforms.csv").exists());
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("DISEP_OUT_DIR", dir.path())
        .args(["run", fixture("golden_small.json").to_str().unwrap(), "--quiet", "--oversample", "25"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"], "golden_small");
}

#[test]
fn sweeps_match_across_executors() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("golden_small.json")).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["sweep"] = serde_json::json!({"parameter": "converter.f_carrier", "grid": {"values": [1000.0, 2000.0, 3000.0]}});
    let path = dir.path().join("sweep.json");
    fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_in(&a, &["sweep", path.to_str().unwrap()]).status.success());
    assert!(run_in(&b, &["sweep", path.to_str().unwrap(), "--sequential"]).status.success());
    let sa = fs::read(a.join("sweep.csv")).unwrap();
    assert_eq!(sa, fs::read(b.join("sweep.csv")).unwrap());
    assert_eq!(String::from_utf8(sa).unwrap().lines().count(), 4);

    let out = run_in(dir.path(), &["sweep", fixture("golden_small.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inductance_sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/inductance_sweep.json");
    let out = run_in(dir.path(), &["sweep", scenario.to_str().unwrap()]);
    assert!(out.status.success());
    let table = fs::read_to_string(dir.path().join("inductance_sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 62);
    assert!(lines[61].starts_with(",ch2b,"));
}

#[test]
fn verify_oracle_batch() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["verify-oracle", "--cases", "20", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("oracle_report.json")).unwrap()).unwrap();
    assert_eq!(report["resistive"]["cases"], 20);
    assert_eq!(report["breaches"].as_array().unwrap().len(), 0);

    let out = run_in(dir.path(), &["verify-oracle", "--cases", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
