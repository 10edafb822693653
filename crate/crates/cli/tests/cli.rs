use std::path::Path;
use std::process::{Command, Output};

use rootlab::groundstate::exact_ground_state_for;
use rootlab::ModelParams;
use serde_json::Value;

fn rootlab(args: &[&str], config: &Path, sets: &[String]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rootlab"));
    cmd.args(args).arg("--config").arg(config);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.env("ROOTLAB_THREADS", "1");
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn out_dir(dir: &Path, name: &str) -> String {
    format!("output_dir={:?}", dir.join(name).to_string_lossy())
}

#[test]
fn ground_energy_matches_exact_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"n": 8, "p": -0.6, "q": -0.3, "xi": 1.2, "backend": "exact"}"#);
    let out = rootlab(&["ground"], &cfg, &[out_dir(tmp.path(), "g")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rec = read_json(&tmp.path().join("g/ground.json"));
    let e = rec["energy"].as_f64().unwrap();
    let params = ModelParams::new(8, 1.0, -0.6, -0.3, 1.2).unwrap();
    let oracle = exact_ground_state_for(&params).unwrap().energy;
    assert!((e - oracle).abs() < 1e-12, "{e} vs {oracle}");
    let manifest = read_json(&tmp.path().join("g/run_manifest.json"));
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["command"], "ground");
}

#[test]
fn same_seed_gives_identical_sweeps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"n": 10, "xi": 1.2, "backend": "dmrg", "max_bond": 24, "min_sweeps": 4, "seed": 7}"#,
    );
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let out = rootlab(&["ground"], &cfg, &[out_dir(tmp.path(), name)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let rec = read_json(&tmp.path().join(name).join("ground.json"));
        logs.push((rec["sweep_energies"].clone(), rec["sweep_truncation"].clone()));
        assert!(tmp.path().join(name).join("ground.mps").exists());
    }
    assert_eq!(logs[0], logs[1]);
    assert!(logs[0].0.as_array().unwrap().len() >= 4);
}

#[test]
fn zeroroots_reuses_dmrg_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"n": 20, "p": 0.7, "q": 0.6, "xi": 1.2, "backend": "dmrg", "max_bond": 32, "min_sweeps": 4, "verify": false}"#,
    );
    let dir = out_dir(tmp.path(), "run");
    let out = rootlab(&["ground"], &cfg, &[dir.clone()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ground = read_json(&tmp.path().join("run/ground.json"));

    let out = rootlab(&["zeroroots"], &cfg, &[dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(&tmp.path().join("run/run_manifest.json"));
    assert!(manifest["iterations"]["dmrg_sweeps"].is_null());
    let stages: Vec<&str> = manifest["timings"].as_array().unwrap().iter().map(|t| t["stage"].as_str().unwrap()).collect();
    assert!(!stages.iter().any(|s| s.contains("dmrg") || *s == "ground"), "{stages:?}");

    let zero = read_json(&tmp.path().join("run/zero_roots.json"));
    let e_zero = zero["energy"].as_f64().unwrap();
    let e_ground = ground["energy"].as_f64().unwrap();
    assert!((e_zero - e_ground).abs() < 1e-8, "{e_zero} vs {e_ground}");
}

#[test]
fn u1_chain_passes_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"n": 16, "p": 0.7, "q": 0.6, "xi": 0.0, "backend": "exact"}"#);
    let out = rootlab(&["zeroroots"], &cfg, &[out_dir(tmp.path(), "z")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = rootlab(&["betheroots"], &cfg, &[out_dir(tmp.path(), "b")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["z/zero_verification.csv", "b/bethe_verification.csv"] {
        let text = std::fs::read_to_string(tmp.path().join(file)).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.ends_with(",PASS")), "{file}:\n{text}");
    }
    let text = std::fs::read_to_string(tmp.path().join("z/zero_verification.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 17);
}

#[test]
fn ladder_column_is_filled() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"n": 8, "ladder": true, "pipeline": "zero_roots"}"#);
    let out = rootlab(&["zeroroots"], &cfg, &[out_dir(tmp.path(), "l")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("l/zero_roots.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "re,im,tag,arg_count,ladder_delta");
    for row in lines {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3], "1", "{row}");
        let d: f64 = cols[4].parse().unwrap_or_else(|_| panic!("no ladder value in {row}"));
        assert!(d > 0.0 && d <= 1e-6, "{row}");
    }
}

#[test]
fn tag_census_of_twisted_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"n": 12, "p": -0.6, "q": -0.3, "xi": 1.2}"#);
    let out = rootlab(&["betheroots"], &cfg, &[out_dir(tmp.path(), "t")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let export = read_json(&tmp.path().join("t/bethe_roots.json"));
    let census = &export["census"];
    let count = |k: &str| census[k].as_u64().unwrap_or_else(|| panic!("census lacks {k}: {census}"));
    // regular, line and arc roots only, with N or N-2 regular ones
    assert!(count("regular") == 12 || count("regular") == 10, "{census}");
    assert!(count("line") > 0 && count("arc") > 0, "{census}");
    assert_eq!(count("paired_line"), 0);
    assert_eq!(count("regular") + count("line") + count("arc"), 24);

    let text = std::fs::read_to_string(tmp.path().join("t/bethe_roots.csv")).unwrap();
    let tags: Vec<&str> = text.lines().skip(1).map(|r| r.split(',').nth(2).unwrap()).collect();
    assert_eq!(tags.iter().filter(|t| **t == "line").count() as u64, count("line"));
    assert_eq!(tags.iter().filter(|t| **t == "arc").count() as u64, count("arc"));
}

#[test]
fn sweep_writes_one_row_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"n": 8, "xi": 1.2, "sweep_key": "p", "sweep_values": [0.3, 0.5, 0.9]}"#,
    );
    let out = rootlab(&["sweep"], &cfg, &[out_dir(tmp.path(), "s")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|r| r.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], k.to_string());
        assert_eq!(row[2], "ok");
        let e0: f64 = row[4].parse().unwrap();
        let ez: f64 = row[5].parse().unwrap();
        let eb: f64 = row[6].parse().unwrap();
        assert!((e0 - ez).abs() < 1e-8 && (e0 - eb).abs() < 1e-8, "{row:?}");
        assert!(tmp.path().join(format!("s/point_{k:03}/run_manifest.json")).exists());
    }
    let manifest = read_json(&tmp.path().join("s/sweep_manifest.json"));
    assert_eq!(manifest["points"].as_array().unwrap().len(), 3);
    assert!(manifest["failed"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_over_p_reports_pair_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"n": 12, "q": 0.7, "xi": 1.7320508075688772, "pipeline": "bethe_roots",
            "sweep_key": "p", "sweep_values": [0.15, 1.9, 2.8]}"#,
    );
    let out = rootlab(&["sweep"], &cfg, &[out_dir(tmp.path(), "s")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let counts: Vec<&str> = text.lines().skip(1).map(|r| r.rsplit(',').next().unwrap()).collect();
    assert_eq!(counts, ["1", "2", "3"], "{text}");
}

#[test]
fn usage_errors_exit_64() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"n": 8, "sweep_key": "p", "sweep_values": []}"#);
    assert_eq!(code(&rootlab(&["sweep"], &cfg, &[])), 64);
    assert_eq!(code(&rootlab(&["ground"], &cfg, &["bogus=1".into()])), 64);
    assert_eq!(code(&rootlab(&["ground"], &tmp.path().join("missing.json"), &[])), 64);
    assert_eq!(code(&rootlab(&["frobnicate"], &cfg, &[])), 64);

    let out = Command::new(env!("CARGO_BIN_EXE_rootlab"))
        .args(["ground", "--config"])
        .arg(&cfg)
        .env("ROOTLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 64);
}

#[test]
fn manifest_rerun_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"n": 8, "p": -0.6, "q": -0.3, "xi": 1.2, "backend": "exact"}"#);
    let out = rootlab(&["zeroroots"], &cfg, &[out_dir(tmp.path(), "first")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = rootlab(&["betheroots"], &cfg, &[out_dir(tmp.path(), "first")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let manifest = tmp.path().join("first/run_manifest.json");
    let out = rootlab(&["betheroots"], &manifest, &[out_dir(tmp.path(), "second")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = rootlab(&["zeroroots"], &manifest, &[out_dir(tmp.path(), "second")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    for file in ["zero_roots.csv", "zero_roots.json", "bethe_roots.csv", "bethe_roots.json"] {
        let a = std::fs::read(tmp.path().join("first").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("second").join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
}
