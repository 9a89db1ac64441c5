use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsep"))
        .args(args)
        .env_remove("FSEP_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A small suite: 2 families x 2 severities.
fn small_suite(dir: &Path) {
    let out = fsep(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--k",
        "4",
        "--d",
        "8",
        "--train-n",
        "50",
        "--test-m",
        "200",
        "--families",
        "2",
        "--severities",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn synth_default_writes_reference_and_25_tests() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsep(&["synth", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let subdirs = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(subdirs, 26);
    assert!(dir.path().join("manifest.json").exists());
    assert_eq!(stdout_json(&out)["bundles"], 26);
}

#[test]
fn fit_prints_fits_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    small_suite(dir.path());
    let manifest = dir.path().join("manifest.json");
    let csv = dir.path().join("rows.csv");
    let out = fsep(&[
        "fit",
        "--manifest",
        manifest.to_str().unwrap(),
        "--metric",
        "dispersion",
        "--metric",
        "frechet",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json = stdout_json(&out);
    for metric in ["dispersion", "frechet"] {
        let fit = &json["fits"][metric];
        for key in ["slope", "intercept", "r2", "spearman", "n_points"] {
            assert!(!fit[key].is_null(), "{metric}.{key} missing");
        }
        assert_eq!(fit["n_points"], 4);
    }
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("bundle,family,severity,true_error,dispersion,frechet"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn report_accepts_comma_separated_metrics() {
    let dir = tempfile::tempdir().unwrap();
    small_suite(dir.path());
    let csv = dir.path().join("report.csv");
    let out = fsep(&[
        "report",
        "--manifest",
        dir.path().join("manifest.json").to_str().unwrap(),
        "--metrics",
        "dispersion,confscore,entropy",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "bundle",
            "family",
            "severity",
            "true_error",
            "dispersion",
            "confscore",
            "entropy"
        ]
    );
    assert_eq!(reader.records().count(), 4);
}

#[test]
fn score_prints_metric_json() {
    let dir = tempfile::tempdir().unwrap();
    small_suite(dir.path());
    let bundle = dir.path().join("family0_s1");
    let out = fsep(&[
        "score",
        "--bundle",
        bundle.to_str().unwrap(),
        "--metric",
        "dispersion",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json = stdout_json(&out);
    assert_eq!(json["metric"], "dispersion");
    assert!(json["value"].as_f64().unwrap().is_finite());
    assert_eq!(json["degenerate"], false);
    assert!(json["seconds"].as_f64().unwrap() >= 0.0);

    let reference = dir.path().join("reference");
    let out = fsep(&[
        "score",
        "--bundle",
        bundle.to_str().unwrap(),
        "--metric",
        "mmd",
        "--reference",
        reference.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout_json(&out)["value"].as_f64().unwrap() >= 0.0);
}

#[test]
fn score_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    small_suite(dir.path());
    let bundle = dir.path().join("family1_s2");
    let reference = dir.path().join("reference");
    let value = |threads: &str| {
        let out = fsep(&[
            "--threads",
            threads,
            "score",
            "--bundle",
            bundle.to_str().unwrap(),
            "--metric",
            "mmd",
            "--reference",
            reference.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        stdout_json(&out)["value"].as_f64().unwrap()
    };
    assert_eq!(value("1").to_bits(), value("4").to_bits());
}

#[test]
fn reference_metric_without_reference_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    small_suite(dir.path());
    let bundle = dir.path().join("family0_s1");
    let out = fsep(&[
        "score",
        "--bundle",
        bundle.to_str().unwrap(),
        "--metric",
        "atc",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--reference"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_metric_and_flag_are_usage_errors() {
    assert_eq!(
        fsep(&["score", "--bundle", "x", "--metric", "nope"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        fsep(&["validate", "--bundle", "x", "--bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(fsep(&[]).status.code(), Some(2));
}

#[test]
fn true_labels_on_unlabeled_bundle_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    small_suite(dir.path());
    let bundle = dir.path().join("family0_s1");
    fs::remove_file(bundle.join("labels.fsl")).unwrap();
    let out = fsep(&[
        "score",
        "--bundle",
        bundle.to_str().unwrap(),
        "--metric",
        "dispersion",
        "--labels",
        "true",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("labels absent"));
}

#[test]
fn validate_is_silent_on_good_bundle_and_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    small_suite(dir.path());
    let bundle = dir.path().join("family0_s1");
    let out = fsep(&["validate", "--bundle", bundle.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty() && out.stderr.is_empty());

    let path = bundle.join("features.fsb");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..30]).unwrap();
    let out = fsep(&["validate", "--bundle", bundle.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unexpected end of file"));
}

#[test]
fn empty_manifest_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.json");
    fs::write(&manifest, r#"{"tests": [], "k": 10}"#).unwrap();
    let out = fsep(&[
        "fit",
        "--manifest",
        manifest.to_str().unwrap(),
        "--metric",
        "dispersion",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn invalid_synth_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsep(&["synth", "--out", dir.path().to_str().unwrap(), "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
