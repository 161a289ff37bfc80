use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bargw_core::io::read_lineage;
use bargw_core::{analyze, StdErrorRule};

fn bargw(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bargw"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run bargw")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn simulate(dir: &Path, set: u32, m: u32, depth: u32, seed: u64, out: &str) {
    write(dir, "params.json", &format!(r#"{{"schema_version": 1, "set": {set}}}"#));
    let o = bargw(
        &[
            "simulate", "--params", "params.json", "--m", &m.to_string(), "--depth", &depth.to_string(), "--seed",
            &seed.to_string(), "--out", out,
        ],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn estimate_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 18, 40, 9, 7, "f.csv");
    let o = bargw(&["estimate", "--data", "f.csv", "--gens", "9", "--level", "0.05", "--out", "r.json", "--deterministic"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let from_cli: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let forest = read_lineage(dir.path().join("f.csv")).unwrap();
    let report = analyze(&forest, 9, 0.05, StdErrorRule::Marginal).unwrap();
    assert_eq!(from_cli, serde_json::to_value(&report).unwrap());
    // full-precision floats survive the trip
    let back: bargw_core::EstimationReport = serde_json::from_value(from_cli).unwrap();
    assert_eq!(back, report);
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 12, 10, 7, 99, "a.csv");
    simulate(dir.path(), 12, 10, 7, 99, "b.csv");
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert!(a.starts_with(b"tree,node,value\n"));
    assert!(!a.contains(&b'\r'));
    for out in ["r1.json", "r2.json"] {
        let o = bargw(&["estimate", "--data", "a.csv", "--gens", "7", "--out", out, "--deterministic", "--seed", "99"], dir.path());
        assert_eq!(code(&o), 0);
    }
    let r1 = fs::read(dir.path().join("r1.json")).unwrap();
    assert_eq!(r1, fs::read(dir.path().join("r2.json")).unwrap());
    assert!(String::from_utf8(r1).unwrap().contains("\"seed\": 99"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "orphan.csv", "tree,node,value\n1,1,0.1\n1,5,0.2\n");
    let o = bargw(&["estimate", "--data", "orphan.csv", "--gens", "2", "--out", "r.json"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert!(!d.join("r.json").exists());

    simulate(d, 4, 10, 6, 1, "f.csv");
    assert_eq!(code(&bargw(&["test", "--data", "f.csv", "--gens", "6", "--which", "no-such-test"], d)), 2);
    assert_eq!(code(&bargw(&["test", "--data", "f.csv", "--gens", "7", "--which", "all"], d)), 2);
    assert_eq!(code(&bargw(&["test", "--data", "f.csv", "--gens", "6", "--which", "all"], d)), 0);

    // no odd-type mothers below the root: the covariances are undefined
    write(d, "thin.csv", "tree,node,value\n1,1,0.1\n1,2,0.2\n1,4,0.3\n");
    assert_eq!(code(&bargw(&["estimate", "--data", "thin.csv", "--gens", "2", "--out", "t.json"], d)), 3);
    assert!(!d.join("t.json").exists());
    assert_eq!(code(&bargw(&["test", "--data", "thin.csv", "--gens", "2", "--which", "gw-mean"], d)), 3);

    assert_eq!(code(&bargw(&["simulate", "--params", "missing.json", "--m", "1", "--depth", "2", "--seed", "0", "--out", "x.csv"], d)), 2);
    assert!(!d.join("x.csv").exists());
}

#[test]
fn fixed_point_level_across_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut rejected = 0;
    for seed in 0..100u64 {
        simulate(d, 4, 20, 8, 1000 + seed, "f.csv");
        let o = bargw(&["test", "--data", "f.csv", "--gens", "8", "--which", "fixed-point", "--out", "t.json"], d);
        assert_eq!(code(&o), 0);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("t.json")).unwrap()).unwrap();
        let p = v[0]["result"]["p_value"].as_f64().unwrap();
        rejected += usize::from(p <= 0.05);
    }
    let rate = rejected as f64 / 100.0;
    assert!((0.01..=0.12).contains(&rate), "rate {rate}");
}

#[test]
fn power_study_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "study.json",
        r#"{"schema_version": 1, "set_ids": [2], "m": 10, "depth": 8, "replications": 100, "seed": 5}"#,
    );
    let o = bargw(&["power", "--config", "study.json", "--out", "power.csv", "--summary", "s.json", "--workers", "2"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(d.join("power.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], "2");
        rows += 1;
        for (h, v) in headers.iter().zip(rec.iter()) {
            if (h.ends_with("_rate") || h.starts_with("coverage_") && !h.ends_with("_evaluated")) && !v.is_empty() {
                let x: f64 = v.parse().unwrap();
                assert!((0.0..=1.0).contains(&x), "{h} = {x}");
            }
        }
    }
    assert_eq!(rows, 7);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(s["sets"][0]["set"], 2);
}

#[test]
fn rate_study_needs_a_window() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "study.json",
        r#"{"schema_version": 1, "set_ids": [11], "m": 5, "depth": 6, "replications": 4, "seed": 5}"#,
    );
    let o = bargw(&["rate", "--config", "study.json", "--out", "rate.csv"], d);
    assert_eq!(code(&o), 2);
    assert!(!d.join("rate.csv").exists());
    write(
        d,
        "study.json",
        r#"{"schema_version": 1, "set_ids": [11], "m": 5, "depth": 6, "replications": 4, "seed": 5, "rate_window": [3, 6]}"#,
    );
    let o = bargw(&["rate", "--config", "study.json", "--out", "rate.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("set 11: slope"));
    write(d, "bad.json", r#"{"schema_version": 2, "set_ids": [11], "m": 5, "depth": 6, "replications": 4, "seed": 5}"#);
    assert_eq!(code(&bargw(&["power", "--config", "bad.json", "--out", "p.csv"], d)), 2);
}
