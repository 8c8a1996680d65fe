use std::path::{Path, PathBuf};

use isic_core::dataset::{load_examples_file, stratified_split};
use isic_core::pipeline::{run_pipeline_with, RunOptions};
use isic_core::{
    evaluate_bundle, run_pipeline, Error, HashingProvider, ModelBundle, PipelineConfig, Stage,
};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn sample_config(output: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::from_path(&data_dir().join("sample.toml")).unwrap();
    config.output = output.to_path_buf();
    config
}

#[test]
fn config_paths_resolve_against_config_dir() {
    let config = PipelineConfig::from_path(&data_dir().join("sample.toml")).unwrap();
    assert!(config.taxonomy.ends_with("data/taxonomy.csv"));
    assert!(config.taxonomy.exists());
    assert_eq!(config.providers.len(), 2);
    assert_eq!(config.train.epochs, 30);
}

#[test]
fn bundle_roundtrips_and_reevaluates_identically() {
    let out = tempfile::tempdir().unwrap();
    let config = sample_config(out.path());
    let bundle = run_pipeline(&config).unwrap();
    let loaded = ModelBundle::load(out.path()).unwrap();
    assert_eq!(loaded, bundle);
    assert_eq!(loaded.version(), bundle.version());

    // Re-deriving the split from the recorded seed gives the recorded test indices.
    let data = load_examples_file(&config.dataset).unwrap();
    let split = stratified_split(&data, loaded.split.test_fraction, loaded.split.seed).unwrap();
    assert_eq!(split.test_indices, loaded.split.test_indices);

    let provider = loaded.provider().unwrap();
    let report = evaluate_bundle(&loaded, &provider, &split.test).unwrap();
    assert_eq!(report, loaded.evaluation);
    assert_eq!(
        evaluate_bundle(&loaded, &provider, &split.test).unwrap(),
        report
    );
}

#[test]
fn evaluate_rejects_a_foreign_provider() {
    let out = tempfile::tempdir().unwrap();
    let bundle = run_pipeline(&sample_config(out.path())).unwrap();
    let data = load_examples_file(&data_dir().join("activities.csv")).unwrap();
    let other = HashingProvider::new(32).unwrap();
    let err = evaluate_bundle(&bundle, &other, &data).unwrap_err();
    assert!(matches!(err, Error::ProviderMismatch { .. }), "{err}");
}

#[test]
fn fixed_provider_skips_comparison() {
    let out = tempfile::tempdir().unwrap();
    let options = RunOptions {
        fixed_provider: Some("hashing-64".into()),
    };
    let bundle = run_pipeline_with(&sample_config(out.path()), &options).unwrap();
    assert_eq!(bundle.weights.provider_id, "hashing-64");
    assert_eq!(bundle.weights.dim, 64);
}

#[test]
fn bad_test_fraction_is_rejected_before_any_work() {
    let out = tempfile::tempdir().unwrap();
    let mut config = sample_config(&out.path().join("run"));
    config.test_fraction = 1.5;
    let err = run_pipeline(&config).unwrap_err();
    assert_eq!(err.stage, Stage::ValidateConfig);
    assert!(!out.path().join("run").exists());
}

#[test]
fn failure_mid_run_leaves_a_failed_directory() {
    let out = tempfile::tempdir().unwrap();
    let bad_data = out.path().join("bad.csv");
    std::fs::write(&bad_data, "activity_name,isic_class\nDemolition,43X1\n").unwrap();
    let mut config = sample_config(&out.path().join("run"));
    config.dataset = bad_data;
    let err = run_pipeline(&config).unwrap_err();
    assert_eq!(err.stage, Stage::LoadExamples);
    let failed = out.path().join("run/failed");
    let error = std::fs::read_to_string(failed.join("error.txt")).unwrap();
    assert!(error.starts_with("stage: load_examples\n"), "{error}");
    let log = std::fs::read_to_string(failed.join("stages.log")).unwrap();
    assert!(log.contains("parse_taxonomy:"), "{log}");
    assert!(!out.path().join("run/weights.json").exists());
}

#[test]
fn taxonomy_revision_is_kept_in_the_snapshot() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(&sample_config(out.path())).unwrap();
    let loaded = ModelBundle::load(out.path()).unwrap();
    assert_eq!(loaded.config.taxonomy_revision.as_deref(), Some("Rev.4"));
}
