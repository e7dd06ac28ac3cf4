mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{header, planted_fixture, read, run_config};
use diachron::pipeline::{
    collect_artifacts, compare_modes, compare_trajectories, run_pipeline, AnalysisToggles, RunManifest, RunStatus,
    MODE_COMPARISON_HEADER,
};
use diachron::Error;
use serde_json::Value;

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    collect_artifacts(dir)
        .unwrap()
        .into_iter()
        .map(|a| {
            let bytes = std::fs::read(dir.join(&a.path)).unwrap();
            (a.path, bytes)
        })
        .collect()
}

/// Checks artifact shapes without going through the library's own types.
fn check_schemas(run: &Path) {
    let a = run.join("analysis");
    let csv_headers = [
        (
            "categorize/trajectories.csv",
            "month,ba,threshold,family,speaker,mode,seed",
        ),
        ("rsa/incremental.csv", "month,family,rho,p_value"),
        ("rsa/non_incremental.csv", "month,family,rho,p_value"),
        (
            "change/child_incremental_semantic.csv",
            "word,month,delta,log_norm_delta,freq_child,freq_adult",
        ),
        (
            "viz/child_incremental_semantic_23_points.csv",
            "word,category,x,y,clipped",
        ),
        ("viz/adult_non_incremental_syntactic_23_centroids.csv", "category,x,y"),
    ];
    for (file, want) in csv_headers {
        assert_eq!(header(&a.join(file)), want, "{file}");
        let cols = want.split(',').count();
        for line in read(&a.join(file)).lines().skip(1) {
            assert_eq!(line.split(',').count(), cols, "{file}: {line}");
        }
    }

    for line in read(&a.join("categorize/trajectories.csv")).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let ba: f64 = f[1].parse().unwrap();
        let r: f64 = f[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&ba) && r > 0.0 && r < 1.0, "{line}");
        assert!(["semantic", "syntactic"].contains(&f[3]));
        assert!(["child", "adult"].contains(&f[4]));
        assert!(["incremental", "non_incremental"].contains(&f[5]));
    }
    for line in read(&a.join("rsa/incremental.csv")).lines().skip(1) {
        let f: Vec<f64> = line.split(',').filter_map(|v| v.parse().ok()).collect();
        assert!((-1.0..=1.0).contains(&f[1]) && f[2] > 0.0 && f[2] <= 1.0, "{line}");
    }

    let fits: Value = serde_json::from_str(&read(&a.join("categorize/fits.json"))).unwrap();
    for fit in fits.as_array().unwrap() {
        for key in ["alpha", "beta", "r_squared", "family", "speaker", "mode", "seed"] {
            assert!(fit.get(key).is_some(), "missing {key} in {fit}");
        }
    }
    let change: Value = serde_json::from_str(&read(&a.join("change/fits.json"))).unwrap();
    let change = change.as_array().unwrap();
    assert_eq!(change.len(), 2 * 2 * 2 * 2);
    for entry in change {
        let fit = &entry["fit"];
        for key in ["beta_f", "beta_t", "intercept"] {
            assert!(fit[key]["estimate"].is_f64() && fit[key]["p_value"].is_f64(), "{key}");
        }
        assert!(fit["sigma_z"].as_f64().unwrap() >= 0.0);
        assert!(fit["sigma_e"].as_f64().unwrap() >= 0.0);
    }
    let neighbors: Value = serde_json::from_str(&read(&a.join("neighbors/child_incremental.json"))).unwrap();
    for q in neighbors.as_array().unwrap() {
        assert!(q["word"].is_string() && q["month"].is_u64());
        assert_eq!(q["neighbors"].as_array().unwrap().len(), 3);
    }
    let probes: Value = serde_json::from_str(&read(&a.join("probes.json"))).unwrap();
    for key in ["child", "adult", "combined"] {
        assert_eq!(probes["counts"][key]["semantic"], 24, "{key}");
    }
    for line in read(&run.join("warnings.jsonl")).lines() {
        assert!(serde_json::from_str::<Value>(line).unwrap()["kind"].is_string());
    }
}

#[test]
fn synthetic_end_to_end_is_complete_valid_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = planted_fixture(dir.path());
    let first = dir.path().join("run1");
    let manifest = run_pipeline(&run_config(&fixture, first.clone())).unwrap();
    assert_eq!(manifest.status, RunStatus::Complete);
    check_schemas(&first);

    // Every file on disk is listed, with the right checksum.
    assert_eq!(
        RunManifest::load(&first).unwrap().artifacts,
        collect_artifacts(&first).unwrap()
    );
    assert!(manifest
        .artifacts
        .iter()
        .any(|a| a.path == "models/child/incremental/seed_3/slice_23.txt"));

    let second = dir.path().join("run2");
    run_pipeline(&run_config(&fixture, second.clone())).unwrap();
    let (a, b) = (files_under(&first), files_under(&second));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (path, bytes) in &a {
        if path != "config.json" {
            assert!(bytes == &b[path], "{path} differs between identical runs");
        }
    }

    let cmp = compare_modes(&first).unwrap();
    assert_eq!(cmp.summary.len(), 4);
    let mut buf = Vec::new();
    diachron::pipeline::write_mode_comparison_csv(&mut buf, &cmp).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap().lines().next().unwrap(),
        MODE_COMPARISON_HEADER
    );
}

#[test]
fn existing_run_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = planted_fixture(dir.path());
    let mut config = run_config(&fixture, dir.path().join("run"));
    config.analyses = AnalysisToggles::none();
    config.seeds = vec![1];
    run_pipeline(&config).unwrap();
    assert!(matches!(run_pipeline(&config), Err(Error::Config(_))));
}

#[test]
fn analyses_off_produces_models_and_manifest_only() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = planted_fixture(dir.path());
    let mut config = run_config(&fixture, dir.path().join("run"));
    config.analyses = AnalysisToggles::none();
    config.seeds = vec![5];
    let manifest = run_pipeline(&config).unwrap();
    for a in &manifest.artifacts {
        assert!(
            a.path.starts_with("models/") || a.path == "config.json" || a.path == "warnings.jsonl",
            "{}",
            a.path
        );
    }
    assert!(!dir.path().join("run/analysis").exists());
    assert!(dir.path().join("run/manifest.json").exists());
}

#[test]
fn failed_stage_leaves_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = planted_fixture(dir.path());
    let mut config = run_config(&fixture, dir.path().join("run"));
    config.seeds = vec![1];
    config.probes = Some(dir.path().join("missing.csv"));
    let err = run_pipeline(&config).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "probes"), "{err}");
    let manifest = RunManifest::load(&dir.path().join("run")).unwrap();
    assert_eq!(manifest.status, RunStatus::Incomplete);
    assert!(manifest.error.unwrap().contains("probes"));
    assert!(manifest.artifacts.iter().any(|a| a.path.starts_with("models/")));
}

#[test]
fn identical_modes_compare_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = planted_fixture(dir.path());
    let mut config = run_config(&fixture, dir.path().join("run"));
    config.seeds = vec![2];
    config.modes = vec![diachron::compass::TrainingMode::Incremental];
    config.analyses = AnalysisToggles {
        categorize: true,
        ..AnalysisToggles::none()
    };
    run_pipeline(&config).unwrap();
    let trajectories =
        diachron::categorize::read_trajectory_csv(&dir.path().join("run/analysis/categorize/trajectories.csv"))
            .unwrap();
    assert!(matches!(compare_modes(&dir.path().join("run")), Err(Error::Config(_))));
    let mut both = trajectories.clone();
    for t in &trajectories {
        let mut twin = t.clone();
        twin.mode = "non_incremental".into();
        both.push(twin);
    }
    let cmp = compare_trajectories(&both).unwrap();
    assert!(cmp.rows.iter().all(|r| r.delta == 0.0));
    assert!(cmp.summary.iter().all(|s| s.percent_improvement == 0.0));
}
