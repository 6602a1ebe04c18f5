use std::path::Path;

use facekit::pipeline::{fixture_hash_list, generate_fixtures, run_pipeline, FixtureConfig, RunConfig};
use facekit::registration::RegistrationReport;

const GOLDEN: &str = include_str!("data/fixtures_seed0.sha256");

fn run_once(root: &Path, out: &str) -> (RunConfig, facekit::pipeline::PipelineOutcome) {
    let set = generate_fixtures(0, root, &FixtureConfig::default()).unwrap();
    let mut cfg = RunConfig::load(&set.config).unwrap();
    cfg.paths.output = root.join(out);
    let outcome = run_pipeline(&cfg).unwrap();
    (cfg, outcome)
}

#[test]
fn seed_zero_fixtures_match_the_golden_list() {
    let dir = tempfile::tempdir().unwrap();
    let set = generate_fixtures(0, dir.path(), &FixtureConfig::default()).unwrap();
    let got = fixture_hash_list(&set);
    if std::env::var_os("FACEKIT_BLESS").is_some() {
        std::fs::write(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/fixtures_seed0.sha256"), &got).unwrap();
        return;
    }
    assert_eq!(got, GOLDEN);
}

#[test]
fn one_fixture_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, outcome) = run_once(dir.path(), "out");
    assert_eq!(outcome.failed(), 0, "{:?}", outcome.manifest.failures);
    let paths: Vec<&str> = outcome.manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
    let has = |suffix: &str| paths.iter().any(|p| p.ends_with(suffix));
    assert!(has("/image.png") && has("/gt_shape.obj") && has("/metrics.json"), "{paths:?}");
    for i in 0..5 {
        assert!(has(&format!("views/view_{i}.png")));
    }
    let poses = paths.iter().filter(|p| p.contains("/pose/") && p.ends_with("image.png")).count();
    let shapes = paths.iter().filter(|p| p.contains("/shape/") && p.ends_with("image.png")).count();
    assert_eq!((poses, shapes), (cfg.augmentation.poses().len(), cfg.augmentation.shape_count));

    let sample = cfg.paths.output.join(&outcome.manifest.samples[0]);
    let report: RegistrationReport = serde_json::from_str(&std::fs::read_to_string(sample.join("report.json")).unwrap()).unwrap();
    assert!(report.is_monotone());
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sample.join("metrics.json")).unwrap()).unwrap();
    for key in ["nme", "dace", "psd"] {
        let v = metrics[key].as_f64().unwrap();
        assert!(v.is_finite() && v >= 0.0, "{key} = {v}");
    }
    // Every stage of the sample is timed.
    let stages: Vec<&str> = outcome.timings.iter().map(|t| t.stage.as_str()).collect();
    assert_eq!(stages, ["load", "register", "disentangle", "texture", "augment_pose", "augment_shape", "synth_views", "eval"]);
}

#[test]
fn same_seed_gives_the_same_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a) = run_once(dir.path(), "first");
    let (_, b) = run_once(dir.path(), "second");
    assert_eq!(std::fs::read(&a.manifest_path).unwrap(), std::fs::read(&b.manifest_path).unwrap());
}
