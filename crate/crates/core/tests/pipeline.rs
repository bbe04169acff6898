mod common;

use std::fs;

use dcrec::config::RunConfig;
use dcrec::pipeline::{self, ThresholdArtifact};
use dcrec::Error;

fn config_in(dir: &std::path::Path) -> RunConfig {
    let mut cfg = common::small_config();
    cfg.paths.run_dir = dir.to_path_buf();
    cfg
}

#[test]
fn stages_demand_their_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    let producer = |e: Error| match e {
        Error::MissingArtifact { producer, .. } => producer,
        other => panic!("unexpected {other}"),
    };
    assert_eq!(producer(pipeline::train(&cfg).unwrap_err()), "prepare");
    pipeline::prepare(&cfg).unwrap();
    assert_eq!(producer(pipeline::eval(&cfg).unwrap_err()), "train");
    assert_eq!(producer(pipeline::calibrate(&cfg).unwrap_err()), "train");
    pipeline::train(&cfg).unwrap();
    assert_eq!(producer(pipeline::eval(&cfg).unwrap_err()), "calibrate");
    pipeline::calibrate(&cfg).unwrap();
    pipeline::eval(&cfg).unwrap();

    let msg = Error::MissingArtifact {
        artifact: "run/cloud.ckpt".into(),
        producer: "train",
    }
    .to_string();
    assert!(msg.contains("dcrec train"), "{msg}");
}

#[test]
fn random_policy_needs_no_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(dir.path());
    cfg.request.policy = dcrec::request::PolicyKind::Random;
    pipeline::prepare(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    let r = pipeline::eval(&cfg).unwrap();
    assert!(r.request_rate > 0.0);
}

#[test]
fn stale_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    pipeline::prepare(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    pipeline::calibrate(&cfg).unwrap();

    let mut other = cfg.clone();
    other.data.drift.noise = 0.2;
    assert!(matches!(pipeline::train(&other), Err(Error::HashMismatch { .. })));

    let mut other = cfg.clone();
    other.device.epochs += 1;
    assert!(matches!(pipeline::calibrate(&other), Err(Error::HashMismatch { .. })));

    let mut other = cfg.clone();
    other.request.budget = 0.4;
    let err = pipeline::eval(&other).unwrap_err();
    assert!(matches!(&err, Error::HashMismatch { artifact, .. } if artifact == "threshold.json"), "{err}");

    // Eval-only settings need no recalibration.
    let mut other = cfg.clone();
    other.sim.metrics_k = vec![1, 5];
    pipeline::eval(&other).unwrap();
}

#[test]
fn reruns_reproduce_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    let run = || {
        pipeline::prepare(&cfg).unwrap();
        pipeline::train(&cfg).unwrap();
        pipeline::calibrate(&cfg).unwrap();
        pipeline::eval(&cfg).unwrap();
        pipeline::read_manifest(dir.path()).unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
    for name in [
        pipeline::SPLITS,
        pipeline::CLOUD_CKPT,
        pipeline::DEVICE_CKPT,
        pipeline::TRAIN_REPORT,
        pipeline::THRESHOLD,
        pipeline::CALIBRATION_HIST,
        pipeline::REPORT_CSV,
        pipeline::REPORT_JSONL,
    ] {
        assert!(first.contains_key(name), "{name} missing from manifest");
    }
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn threshold_artifact_is_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    pipeline::prepare(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    let t = pipeline::calibrate(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join(pipeline::THRESHOLD)).unwrap();
    let back: ThresholdArtifact = serde_json::from_str(&text).unwrap();
    assert_eq!(back, t);
    assert_eq!(t.histogram.iter().map(|b| b.count).sum::<usize>(), t.n);
    assert_eq!(t.allowed, (cfg.request.budget * t.n as f64 + 1e-9).floor() as usize);
    let v = t.value.unwrap();
    assert!(t.min <= v && v <= t.max);

    let mut never = cfg.clone();
    never.request.budget = 0.0;
    let t0 = pipeline::calibrate(&never).unwrap();
    assert_eq!(t0.value, None);
    assert_eq!(pipeline::eval(&never).unwrap().request_count, 0);
}

#[test]
fn bundled_config_is_the_default() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/drift.toml");
    let cfg = RunConfig::load(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, RunConfig::default());
    let d = &cfg.data.drift;
    assert!(d.n_users <= 2000 && d.n_items <= 500);
}

#[test]
fn missing_event_log_is_reported_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.toml");
    fs::write(&p, "[paths]\nevents = \"/nonexistent/events.tsv\"\n").unwrap();
    assert!(matches!(RunConfig::load(&p), Err(Error::MissingPath(_))));
}
