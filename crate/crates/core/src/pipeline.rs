//! Artifact-producing stages behind the command-line tool.
//!
//! Every stage reads its prerequisites from the run directory, checks the
//! config digest they carry against the current config, and writes its own
//! outputs next to them. Files are written to a temporary name and renamed,
//! so an interrupted stage never leaves a truncated artifact behind.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Stage};
use crate::data::{parse_hash, read_event_log, read_snapshot, write_snapshot, DatasetSplits};
use crate::digest::hash_bytes;
use crate::error::{Error, Result};
use crate::model::{Ranker, TrainReport};
use crate::request::{calibrate_threshold, histogram, histogram_csv, HistogramBin, PolicyKind, RequestPolicy};
use crate::simeval::{
    calibration_scores, cohorts, finish_device, pretrain_device, prepare_splits, reports_csv, run_ablation,
    run_episode, standard_arms, train_cloud, write_reports_jsonl, InferenceArm, Metric, SimConfig, SimReport,
    TrainingArm,
};
use crate::types::RawEvent;

pub const SPLITS: &str = "splits.jsonl";
pub const CLOUD_CKPT: &str = "cloud.ckpt";
pub const DEVICE_CKPT: &str = "device.ckpt";
pub const TRAIN_REPORT: &str = "train_report.jsonl";
pub const THRESHOLD: &str = "threshold.json";
pub const CALIBRATION_HIST: &str = "calibration_hist.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSONL: &str = "report.jsonl";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_JSONL: &str = "ablation.jsonl";
pub const ABLATION_SUMMARY: &str = "ablation_summary.csv";
pub const MANIFEST: &str = "manifest.json";

const HIST_BINS: usize = 20;

fn path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.run_dir.join(name)
}

fn hex(h: u64) -> String {
    format!("{h:016x}")
}

/// Writes `bytes` to `run_dir/name` via a temporary file and records the
/// artifact in the manifest.
fn write_artifact(cfg: &RunConfig, name: &str, command: &str, config_hash: u64, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(&cfg.paths.run_dir)?;
    let dst = path(cfg, name);
    let tmp = path(cfg, &format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &dst)?;
    record(cfg, name, command, config_hash, bytes)
}

/// One manifest line per artifact: the command that wrote it, the config
/// digest it was produced under, and a digest of its contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub command: String,
    pub config_hash: String,
    pub content_hash: String,
}

pub fn read_manifest(run_dir: &Path) -> Result<BTreeMap<String, ManifestEntry>> {
    let p = run_dir.join(MANIFEST);
    if !p.exists() {
        return Ok(BTreeMap::new());
    }
    Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
}

fn record(cfg: &RunConfig, name: &str, command: &str, config_hash: u64, bytes: &[u8]) -> Result<()> {
    let mut m = read_manifest(&cfg.paths.run_dir)?;
    m.insert(
        name.to_string(),
        ManifestEntry {
            command: command.to_string(),
            config_hash: hex(config_hash),
            content_hash: hex(hash_bytes(bytes)),
        },
    );
    let tmp = path(cfg, ".manifest.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&m)? + "\n")?;
    fs::rename(tmp, path(cfg, MANIFEST))?;
    Ok(())
}

fn require(cfg: &RunConfig, name: &str, producer: &'static str) -> Result<PathBuf> {
    let p = path(cfg, name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact {
            artifact: p.display().to_string(),
            producer,
        })
    }
}

fn check_hash(artifact: &str, expected: u64, found: u64) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::HashMismatch {
            artifact: artifact.to_string(),
            expected,
            found,
        })
    }
}

/// The configured event log, if any.
pub fn load_events(cfg: &RunConfig) -> Result<Option<Vec<RawEvent>>> {
    match &cfg.paths.events {
        None => Ok(None),
        Some(p) => {
            if !p.exists() {
                return Err(Error::MissingPath(p.clone()));
            }
            Ok(Some(read_event_log(BufReader::new(File::open(p)?))?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrepareSummary {
    pub n_users: usize,
    pub n_items: usize,
    pub dropped_users: usize,
    pub config_hash: String,
}

pub fn prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    let events = load_events(cfg)?;
    let splits = prepare_splits(cfg, cfg.seed, events.as_deref())?;
    let h = cfg.stage_hash(Stage::Prepare);
    let mut buf = Vec::new();
    write_snapshot(&mut buf, &splits, cfg.seed, h)?;
    write_artifact(cfg, SPLITS, "prepare", h, &buf)?;
    Ok(PrepareSummary {
        n_users: splits.len(),
        n_items: splits.n_items,
        dropped_users: splits.dropped_users,
        config_hash: hex(h),
    })
}

pub fn load_splits(cfg: &RunConfig) -> Result<DatasetSplits> {
    let p = require(cfg, SPLITS, "prepare")?;
    let (splits, header) = read_snapshot(BufReader::new(File::open(p)?))?;
    check_hash(SPLITS, cfg.stage_hash(Stage::Prepare), parse_hash(&header.config_hash)?)?;
    Ok(splits)
}

fn load_ranker(cfg: &RunConfig, name: &str) -> Result<Ranker> {
    let p = require(cfg, name, "train")?;
    let (ranker, info) = Ranker::load(BufReader::new(File::open(p)?), None)?;
    check_hash(name, cfg.stage_hash(Stage::Train), info.provenance)?;
    Ok(ranker)
}

pub fn load_cloud(cfg: &RunConfig) -> Result<Ranker> {
    load_ranker(cfg, CLOUD_CKPT)
}

pub fn load_device(cfg: &RunConfig) -> Result<Ranker> {
    load_ranker(cfg, DEVICE_CKPT)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub reports: Vec<TrainReport>,
    pub cloud_checksum: u64,
    pub device_checksum: u64,
}

/// Trains the cloud ranker, then the device through the phases enabled in
/// the collab block, and checkpoints both.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    let splits = load_splits(cfg)?;
    let (cloud, cloud_rep) = train_cloud(cfg, &splits, cfg.seed)?;
    let (pretrained, device_rep) = pretrain_device(cfg, &splits, cfg.seed)?;
    let (device, phase_reps) =
        finish_device(&pretrained, &cloud, &splits, &cfg.collab, TrainingArm::from_collab(&cfg.collab))?;

    let h = cfg.stage_hash(Stage::Train);
    for (name, ranker) in [(CLOUD_CKPT, &cloud), (DEVICE_CKPT, &device)] {
        let mut buf = Vec::new();
        ranker.save(&mut buf, h)?;
        write_artifact(cfg, name, "train", h, &buf)?;
    }
    let mut reports = vec![cloud_rep, device_rep];
    reports.extend(phase_reps);
    let mut buf = Vec::new();
    for r in &reports {
        r.write_jsonl(&mut buf)?;
    }
    write_artifact(cfg, TRAIN_REPORT, "train", h, &buf)?;
    Ok(TrainSummary {
        reports,
        cloud_checksum: cloud.checksum(),
        device_checksum: device.checksum(),
    })
}

/// The persisted request threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdArtifact {
    /// `None` when the budget admits no requests.
    pub value: Option<f64>,
    pub budget: f64,
    pub n: usize,
    pub allowed: usize,
    pub realized: usize,
    pub ties_exceed_budget: bool,
    pub min: f64,
    pub max: f64,
    pub histogram: Vec<HistogramBin>,
    pub config_hash: String,
}

impl ThresholdArtifact {
    pub fn threshold(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }
}

/// Computes the inconsistency scores of the calibration cohort and the
/// threshold that meets the configured budget.
pub fn calibrate(cfg: &RunConfig) -> Result<ThresholdArtifact> {
    let splits = load_splits(cfg)?;
    let cloud = load_cloud(cfg)?;
    let device = load_device(cfg)?;
    let groups = cohorts(&splits, cfg.data.calibration_fraction, cfg.seed);
    let scores = calibration_scores(
        &cloud,
        &device,
        &splits,
        &groups.calibration,
        cfg.sim.k,
        cfg.data.delta_t,
    )?;
    let cal = calibrate_threshold(&scores, cfg.request.budget)?;
    if cal.ties_exceed_budget() {
        log::warn!(
            "ties at the threshold: {} of {} calibration users would request, budget allows {}",
            cal.realized,
            cal.n,
            cal.allowed
        );
    }
    let h = cfg.stage_hash(Stage::Calibrate);
    let art = ThresholdArtifact {
        value: cal.threshold.is_finite().then_some(cal.threshold),
        budget: cal.budget,
        n: cal.n,
        allowed: cal.allowed,
        realized: cal.realized,
        ties_exceed_budget: cal.ties_exceed_budget(),
        min: cal.min,
        max: cal.max,
        histogram: histogram(&scores, HIST_BINS),
        config_hash: hex(h),
    };
    write_artifact(cfg, THRESHOLD, "calibrate", h, (serde_json::to_string_pretty(&art)? + "\n").as_bytes())?;
    write_artifact(cfg, CALIBRATION_HIST, "calibrate", h, histogram_csv(&scores, HIST_BINS).as_bytes())?;
    Ok(art)
}

pub fn load_threshold(cfg: &RunConfig) -> Result<ThresholdArtifact> {
    let p = require(cfg, THRESHOLD, "calibrate")?;
    let art: ThresholdArtifact = serde_json::from_str(&fs::read_to_string(p)?)?;
    check_hash(THRESHOLD, cfg.stage_hash(Stage::Calibrate), parse_hash(&art.config_hash)?)?;
    Ok(art)
}

/// The request policy of the request block. The inconsistency kind needs
/// the calibrated threshold.
pub fn configured_policy(cfg: &RunConfig) -> Result<RequestPolicy> {
    Ok(match cfg.request.policy {
        PolicyKind::Inconsistency => RequestPolicy::inconsistency(cfg.request.budget, load_threshold(cfg)?.threshold()),
        PolicyKind::Random => RequestPolicy::random(cfg.request.budget, cfg.request.seed),
    })
}

fn policy_name(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Inconsistency => "inconsistency",
        PolicyKind::Random => "random",
    }
}

/// Evaluates the configured collaborative inference on the test cohort.
pub fn eval(cfg: &RunConfig) -> Result<SimReport> {
    let splits = load_splits(cfg)?;
    let cloud = load_cloud(cfg)?;
    let device = load_device(cfg)?;
    let policy = configured_policy(cfg)?;
    let groups = cohorts(&splits, cfg.data.calibration_fraction, cfg.seed);
    let sim = SimConfig {
        k: cfg.sim.k,
        delta_t: cfg.data.delta_t,
        fusion: cfg.fusion,
        arm: InferenceArm::BothFusion,
        policy: Some(policy),
        realtime_cloud: false,
        metrics_k: cfg.sim.metrics_k.clone(),
        seed: cfg.seed,
        label: format!("eval:{}@{}", policy_name(policy.kind), policy.budget),
    };
    let report = run_episode(&cloud, &device, &splits, &groups.test, &sim)?;
    let h = cfg.stage_hash(Stage::Eval);
    let reports = std::slice::from_ref(&report);
    write_artifact(cfg, REPORT_CSV, "eval", h, reports_csv(reports).as_bytes())?;
    let mut buf = Vec::new();
    write_reports_jsonl(&mut buf, reports)?;
    write_artifact(cfg, REPORT_JSONL, "eval", h, &buf)?;
    Ok(report)
}

/// Per-arm means over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub arm: String,
    pub metric: &'static str,
    pub k: usize,
    pub mean: f64,
    pub request_rate: f64,
    pub seeds: usize,
}

pub fn summarize(reports: &[SimReport]) -> Vec<SummaryRow> {
    let mut arms: Vec<&str> = Vec::new();
    for r in reports {
        if !arms.contains(&r.arm.as_str()) {
            arms.push(&r.arm);
        }
    }
    let mut rows = Vec::new();
    for arm in arms {
        let of_arm: Vec<&SimReport> = reports.iter().filter(|r| r.arm == arm).collect();
        let rate = of_arm.iter().map(|r| r.request_rate).sum::<f64>() / of_arm.len() as f64;
        for mv in &of_arm[0].metrics {
            let vals: Vec<f64> = of_arm.iter().filter_map(|r| r.get(mv.metric, mv.k)).collect();
            rows.push(SummaryRow {
                arm: arm.to_string(),
                metric: mv.metric.name(),
                k: mv.k,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                request_rate: rate,
                seeds: vals.len(),
            });
        }
    }
    rows
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("arm,metric,K,mean,request_rate,seeds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.arm, r.metric, r.k, r.mean, r.request_rate, r.seeds
        ));
    }
    out
}

/// Runs the standard ablation suite over `seeds`. Self-contained: each seed
/// prepares its own data and trains its own models in memory.
pub fn ablate(cfg: &RunConfig, seeds: &[u64]) -> Result<Vec<SimReport>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("no seeds to ablate".into()));
    }
    let events = load_events(cfg)?;
    let reports = run_ablation(cfg, &standard_arms(cfg), seeds, events.as_deref())?;
    let h = crate::digest::combine(cfg.stage_hash(Stage::Eval), crate::digest::hash_json(seeds));
    write_artifact(cfg, ABLATION_CSV, "ablate", h, reports_csv(&reports).as_bytes())?;
    let mut buf = Vec::new();
    write_reports_jsonl(&mut buf, &reports)?;
    write_artifact(cfg, ABLATION_JSONL, "ablate", h, &buf)?;
    write_artifact(cfg, ABLATION_SUMMARY, "ablate", h, summary_csv(&summarize(&reports)).as_bytes())?;
    Ok(reports)
}

/// Mean NDCG@10 by arm label, for quick printing.
pub fn ndcg10_by_arm(reports: &[SimReport]) -> Vec<(String, f64)> {
    summarize(reports)
        .into_iter()
        .filter(|r| r.metric == Metric::Ndcg.name() && r.k == 10)
        .map(|r| (r.arm, r.mean))
        .collect()
}

/// Writes a line per report as `arm metric@K=value ...` for terminals.
pub fn write_brief<W: Write>(mut w: W, report: &SimReport) -> Result<()> {
    write!(w, "{}", report.arm)?;
    for m in &report.metrics {
        write!(w, " {}@{}={:.4}", m.metric.name(), m.k, m.value)?;
    }
    writeln!(w, " request_rate={:.4}", report.request_rate)?;
    Ok(())
}
