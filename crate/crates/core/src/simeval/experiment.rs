use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, InferenceArm, SimConfig};
use super::report::SimReport;
use crate::collab::{retrain_adaptive, train_cooperative, CollabConfig};
use crate::config::RunConfig;
use crate::data::{build_splits, generate_drift, DatasetSplits, NegativeSampler};
use crate::digest::combine;
use crate::error::{Error, Result};
use crate::infer::SlateProvider;
use crate::model::{train_independent, Ranker, RankerConfig, TrainReport};
use crate::request::{calibrate_threshold, PolicyKind, RequestPolicy};
use crate::rng::mix64;
use crate::types::{remap_ids, Interaction, RawEvent, UserId};

/// Splits for one seed: generated from the drift spec, or built from an
/// event log when one is given (the seed then only affects the models).
pub fn prepare_splits(cfg: &RunConfig, seed: u64, events: Option<&[RawEvent]>) -> Result<DatasetSplits> {
    let (interactions, n_items): (Vec<Interaction>, usize) = match events {
        Some(ev) => {
            let (catalog, inter) = remap_ids(ev)?;
            (inter, catalog.n_items())
        }
        None => {
            let spec = crate::data::DriftSpec {
                seed,
                ..cfg.data.drift.clone()
            };
            (generate_drift(&spec)?, spec.n_items)
        }
    };
    build_splits(&interactions, n_items, cfg.data.delta_t)
}

/// Calibration and evaluation users. The calibration cohort is an exact
/// `round(fraction * n)` users chosen by a keyed hash of the user id; both
/// lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohorts {
    pub calibration: Vec<UserId>,
    pub test: Vec<UserId>,
}

pub fn cohorts(splits: &DatasetSplits, fraction: f64, seed: u64) -> Cohorts {
    let mut keyed: Vec<(u64, UserId)> = splits
        .users
        .iter()
        .map(|u| (mix64(seed ^ mix64(u.user.0 as u64 + 1)), u.user))
        .collect();
    keyed.sort_unstable();
    let n_cal = ((fraction * keyed.len() as f64).round() as usize).min(keyed.len());
    let mut calibration: Vec<UserId> = keyed[..n_cal].iter().map(|&(_, u)| u).collect();
    let mut test: Vec<UserId> = keyed[n_cal..].iter().map(|&(_, u)| u).collect();
    calibration.sort_unstable();
    test.sort_unstable();
    Cohorts { calibration, test }
}

fn seeded(cfg: &RankerConfig, seed: u64, role: u64) -> RankerConfig {
    RankerConfig {
        seed: combine(combine(cfg.seed, seed), role),
        ..cfg.clone()
    }
}

/// Cloud ranker trained independently on the historical data.
pub fn train_cloud(cfg: &RunConfig, splits: &DatasetSplits, seed: u64) -> Result<(Ranker, TrainReport)> {
    let rc = seeded(&cfg.cloud, seed, 1);
    let hist = splits.historical();
    let sampler = NegativeSampler::new(splits.n_items, hist.iter().copied(), rc.neg_rate);
    let mut cloud = Ranker::new(&rc, splits.n_items)?;
    let mut rep = train_independent(&mut cloud, &hist, &sampler, &rc)?;
    rep.phase = "cloud-independent".into();
    Ok((cloud, rep))
}

/// Device ranker after the independent phase.
pub fn pretrain_device(cfg: &RunConfig, splits: &DatasetSplits, seed: u64) -> Result<(Ranker, TrainReport)> {
    let rc = seeded(&cfg.device, seed, 2);
    let hist = splits.historical();
    let sampler = NegativeSampler::new(splits.n_items, hist.iter().copied(), rc.neg_rate);
    let mut device = Ranker::new(&rc, splits.n_items)?;
    let rep = train_independent(&mut device, &hist, &sampler, &rc)?;
    Ok((device, rep))
}

/// Which optional collaborative phases a device went through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainingArm {
    pub cooperative: bool,
    pub adaptive: bool,
}

impl TrainingArm {
    pub const NEITHER: TrainingArm = TrainingArm {
        cooperative: false,
        adaptive: false,
    };
    pub const ALL: [TrainingArm; 4] = [
        TrainingArm::NEITHER,
        TrainingArm {
            cooperative: true,
            adaptive: false,
        },
        TrainingArm {
            cooperative: false,
            adaptive: true,
        },
        TrainingArm {
            cooperative: true,
            adaptive: true,
        },
    ];

    pub fn from_collab(c: &CollabConfig) -> Self {
        Self {
            cooperative: c.cooperative,
            adaptive: c.adaptive,
        }
    }

    pub fn name(self) -> &'static str {
        match (self.cooperative, self.adaptive) {
            (false, false) => "neither",
            (true, false) => "coop",
            (false, true) => "adaptive",
            (true, true) => "coop+adaptive",
        }
    }
}

/// Runs the optional phases of `arm` on a copy of the pretrained device.
pub fn finish_device(
    pretrained: &Ranker,
    cloud: &Ranker,
    splits: &DatasetSplits,
    collab: &CollabConfig,
    arm: TrainingArm,
) -> Result<(Ranker, Vec<TrainReport>)> {
    let mut device = pretrained.clone();
    let mut reports = Vec::new();
    if arm.cooperative {
        reports.push(train_cooperative(&mut device, cloud, &splits.historical(), collab)?);
    }
    if arm.adaptive {
        reports.push(retrain_adaptive(&mut device, &splits.realtime(), collab)?);
    }
    debug_assert!(cloud.params().all_finite());
    Ok((device, reports))
}

/// Inconsistency scores of the calibration users, computed exactly as the
/// simulator computes them for evaluation users.
pub fn calibration_scores(
    cloud: &dyn SlateProvider,
    device: &Ranker,
    splits: &DatasetSplits,
    users: &[UserId],
    k: usize,
    delta_t: usize,
) -> Result<Vec<f64>> {
    if users.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let sim = SimConfig {
        k,
        delta_t,
        arm: InferenceArm::CloudOnly,
        metrics_k: vec![1],
        label: "calibration".into(),
        ..SimConfig::default()
    };
    let rep = run_episode(cloud, device, splits, users, &sim)?;
    Ok(rep.outcomes.iter().map(|o| o.c).collect())
}

/// One cell of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub label: String,
    pub training: TrainingArm,
    pub inference: InferenceArm,
    pub k: usize,
    /// `(kind, budget)`; `None` never requests.
    pub policy: Option<(PolicyKind, f64)>,
    pub realtime_cloud: bool,
}

impl ArmSpec {
    fn new(label: String, training: TrainingArm, inference: InferenceArm, k: usize) -> Self {
        Self {
            label,
            training,
            inference,
            k,
            policy: None,
            realtime_cloud: false,
        }
    }
}

/// The standard suite: training ablation, inference ablation, slate length
/// and request policies. Arms other than the training ablation use the
/// device trained with the phases enabled in `cfg.collab`.
pub fn standard_arms(cfg: &RunConfig) -> Vec<ArmSpec> {
    let full = TrainingArm::from_collab(&cfg.collab);
    let k = cfg.sim.k;
    let mut arms = Vec::new();
    for t in TrainingArm::ALL {
        arms.push(ArmSpec::new(
            format!("train:{}", t.name()),
            t,
            InferenceArm::BothFusion,
            k,
        ));
    }
    for inf in [
        InferenceArm::CloudOnly,
        InferenceArm::DeviceOnly,
        InferenceArm::BothNoFusion,
        InferenceArm::BothFusion,
    ] {
        arms.push(ArmSpec::new(format!("infer:{}", inf.name()), full, inf, k));
    }
    let mut rt = ArmSpec::new("infer:rt-upper-bound".into(), full, InferenceArm::BothFusion, k);
    rt.realtime_cloud = true;
    arms.push(rt);
    for &kk in &cfg.ablation.ks {
        arms.push(ArmSpec::new(format!("k:{kk}"), full, InferenceArm::BothFusion, kk));
    }
    for &b in &cfg.ablation.budgets {
        for kind in [PolicyKind::Inconsistency, PolicyKind::Random] {
            let name = match kind {
                PolicyKind::Inconsistency => "inconsistency",
                PolicyKind::Random => "random",
            };
            let mut a = ArmSpec::new(format!("policy:{name}@{b}"), full, InferenceArm::BothFusion, k);
            a.policy = Some((kind, b));
            arms.push(a);
        }
    }
    arms
}

/// Trains every device variant the arms need for one seed and evaluates each
/// arm on the test cohort.
pub fn run_seed(
    cfg: &RunConfig,
    arms: &[ArmSpec],
    seed: u64,
    events: Option<&[RawEvent]>,
) -> Result<Vec<SimReport>> {
    let splits = prepare_splits(cfg, seed, events)?;
    let groups = cohorts(&splits, cfg.data.calibration_fraction, seed);
    if groups.test.is_empty() {
        return Err(Error::EmptyInput("no evaluation users"));
    }
    let (cloud, _) = train_cloud(cfg, &splits, seed)?;
    let (pretrained, _) = pretrain_device(cfg, &splits, seed)?;

    let mut needed: Vec<TrainingArm> = arms.iter().map(|a| a.training).collect();
    needed.sort_by_key(|t| (t.cooperative, t.adaptive));
    needed.dedup();
    let devices: Vec<(TrainingArm, Ranker)> = needed
        .par_iter()
        .map(|&t| finish_device(&pretrained, &cloud, &splits, &cfg.collab, t).map(|(d, _)| (t, d)))
        .collect::<Result<_>>()?;
    let device_for = |t: TrainingArm| &devices.iter().find(|(a, _)| *a == t).expect("trained").1;

    let mut reports = Vec::with_capacity(arms.len());
    for arm in arms {
        let device = device_for(arm.training);
        let policy = match arm.policy {
            None => None,
            Some((PolicyKind::Random, b)) => Some(RequestPolicy::random(b, cfg.request.seed)),
            Some((PolicyKind::Inconsistency, b)) => {
                let scores = calibration_scores(
                    &cloud,
                    device,
                    &splits,
                    &groups.calibration,
                    arm.k,
                    cfg.data.delta_t,
                )?;
                let cal = calibrate_threshold(&scores, b)?;
                Some(RequestPolicy::inconsistency(b, cal.threshold))
            }
        };
        let sim = SimConfig {
            k: arm.k,
            delta_t: cfg.data.delta_t,
            fusion: cfg.fusion,
            arm: arm.inference,
            policy,
            realtime_cloud: arm.realtime_cloud,
            metrics_k: cfg.sim.metrics_k.clone(),
            seed,
            label: arm.label.clone(),
        };
        reports.push(run_episode(&cloud, device, &splits, &groups.test, &sim)?);
    }
    Ok(reports)
}

/// Runs `arms` for every seed. Seeds run concurrently; the result is
/// seed-major in the order given, then arm order.
pub fn run_ablation(
    cfg: &RunConfig,
    arms: &[ArmSpec],
    seeds: &[u64],
    events: Option<&[RawEvent]>,
) -> Result<Vec<SimReport>> {
    let per_seed: Vec<Vec<SimReport>> = seeds
        .par_iter()
        .map(|&s| run_seed(cfg, arms, s, events))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}
