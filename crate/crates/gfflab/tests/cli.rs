use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gfflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfflab"))
        .args(args)
        .env_remove("GFFLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_iso_on_p3_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = gfflab(&["run", s(&config("verify-iso-p3.json")), "--replicas", "4000", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("test,statistic,value,stderr,target,tolerance,pass\n"));
    assert!(csv.contains("isomorphism_discrete") && csv.contains("isomorphism_signed"));
    assert!(!csv.contains(",FAIL"));
}

#[test]
fn cluster_fps_at_other_intensity_is_a_config_error() {
    let out = gfflab(&["run", s(&config("cluster-fps-alpha07.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("signed isomorphism stated only at α = 1/2"), "{err}");
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"schema_version": 1, "kind": "fps", "network": {"bundled": "p3"}, "replicas": 1, "seed": 1, "sead": 2}"#).unwrap();
    let out = gfflab(&["run", s(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field `sead`"));
}

#[test]
fn perc_curve_table_has_one_row_per_size_and_theta() {
    let dir = tempfile::tempdir().unwrap();
    let out = gfflab(&["perc-curve", "--sizes", "8,16", "--replicas", "40", "--out", s(dir.path()), "--deterministic"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("perc_curve.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("n,theta,p,stderr"));
    assert_eq!(lines.count(), 9 * 2);
    assert!(dir.path().join("perc_curve.svg").exists());
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json" | "svg")))
        .filter(|p| p.file_name().unwrap() != "config.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn runs_are_reproducible_across_worker_counts() {
    let base = tempfile::tempdir().unwrap();
    for kind in [&["fps", "--grid", "6x6", "--u", "0.3"][..], &["sample-soup", "--network", "house", "--u", "0.5"][..]] {
        let mut seen = Vec::new();
        for (i, workers) in ["1", "1", "3"].iter().enumerate() {
            let dir = base.path().join(format!("{}-{i}", kind[0]));
            let mut args = kind.to_vec();
            args.extend(["--replicas", "60", "--seed", "42", "--workers", workers, "--deterministic", "--out", s(&dir)]);
            let out = gfflab(&args);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            seen.push(outputs(&dir));
        }
        assert!(!seen[0].is_empty());
        assert_eq!(seen[0], seen[1], "{} differs between identical runs", kind[0]);
        assert_eq!(seen[0], seen[2], "{} differs across worker counts", kind[0]);
    }
}

#[test]
fn manifest_records_hash_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = gfflab(&["sample-gff", "--network", "p4", "--u", "1", "--replicas", "50", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let arts: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(arts.contains(&"field.csv") && arts.contains(&"report.csv"));
    let svg = fs::read_to_string(dir.path().join("network.svg")).unwrap();
    assert!(svg.contains("<metadata>"));
}

#[test]
fn networks_lists_bundled_examples() {
    let out = gfflab(&["networks"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l == "p3"));
}
