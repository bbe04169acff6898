use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::NeighborTable;
use crate::data::NegativeSampler;
use crate::error::{Error, Result};
use crate::model::{fit, training_samples, train_independent, LossKind, PhaseTag, Ranker, TrainReport};
use crate::types::{ItemId, UserId};

/// Settings for the cooperative and adaptive phases. Learning rate, batch
/// size and optimizer come from the device ranker's own config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollabConfig {
    pub cooperative: bool,
    pub adaptive: bool,
    pub coop_epochs: usize,
    pub adaptive_epochs: usize,
    /// Neighbours added per slate item.
    pub k_aug: usize,
    /// Length of the cloud slates the device learns to rerank.
    pub slate_len: usize,
    /// Learning-rate multiplier for the adaptive phase.
    pub adaptive_lr_scale: f64,
}

impl Default for CollabConfig {
    fn default() -> Self {
        Self {
            cooperative: true,
            adaptive: true,
            coop_epochs: 5,
            adaptive_epochs: 3,
            k_aug: 1,
            slate_len: 20,
            adaptive_lr_scale: 1.0,
        }
    }
}

impl CollabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slate_len == 0 {
            return Err(Error::InvalidConfig("collab.slate_len must be positive".into()));
        }
        if !(self.adaptive_lr_scale.is_finite() && self.adaptive_lr_scale >= 0.0) {
            return Err(Error::InvalidConfig(
                "collab.adaptive_lr_scale must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Trains the device to rerank within cloud slates. For each sample the
/// frozen cloud recalls `slate_len` items from the same history, the slate is
/// augmented with embedding neighbours, and the device minimizes softmax
/// cross-entropy of the positive against every other augmented item.
///
/// A sample whose augmented slate holds nothing but the positive has no
/// negatives; it is skipped and counted.
pub fn train_cooperative(
    device: &mut Ranker,
    cloud: &Ranker,
    data: &[(UserId, &[ItemId])],
    cfg: &CollabConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if cloud.n_items() != device.n_items() {
        return Err(Error::InvalidConfig(format!(
            "cloud has {} items, device has {}",
            cloud.n_items(),
            device.n_items()
        )));
    }
    let samples = training_samples(data, device.config().max_seq_len);
    if samples.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    for s in &samples {
        if s.target.index() >= device.n_items() {
            return Err(Error::UnknownItem(s.target));
        }
    }
    let table = NeighborTable::build(cloud, cfg.k_aug)?;
    let slate_len = cfg.slate_len.min(cloud.n_items());
    let negatives: Vec<Option<Vec<ItemId>>> = samples
        .par_iter()
        .map(|s| {
            let slate = cloud.recall_topk(&s.history, slate_len)?;
            let aug = table.augment(&slate)?;
            let negs: Vec<ItemId> = aug.all_items().filter(|&q| q != s.target).collect();
            Ok((!negs.is_empty()).then_some(negs))
        })
        .collect::<Result<_>>()?;

    let mut run_cfg = device.config().clone();
    run_cfg.epochs = cfg.coop_epochs;
    fit(
        device,
        &samples,
        &run_cfg,
        LossKind::Softmax,
        "cooperative",
        PhaseTag::Cooperative,
        |idx, _, _| Ok(negatives[idx].clone()),
    )
}

/// Continues training the device on real-time histories only, with fresh
/// optimizer state. Empty data yields a report carrying a warning.
pub fn retrain_adaptive(
    device: &mut Ranker,
    data: &[(UserId, &[ItemId])],
    cfg: &CollabConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let samples = training_samples(data, device.config().max_seq_len);
    if samples.is_empty() {
        log::warn!("adaptive retraining skipped: no real-time data");
        return Ok(TrainReport::empty(
            "adaptive",
            Some("no real-time training data; device unchanged".into()),
        ));
    }
    let mut run_cfg = device.config().clone();
    run_cfg.epochs = cfg.adaptive_epochs;
    run_cfg.lr *= cfg.adaptive_lr_scale;
    let sampler = NegativeSampler::new(device.n_items(), data.iter().copied(), run_cfg.neg_rate);
    let rate = run_cfg.neg_rate;
    fit(
        device,
        &samples,
        &run_cfg,
        run_cfg.loss,
        "adaptive",
        PhaseTag::Adaptive,
        |_, s, rng| sampler.sample_negatives(s.user, rate, rng).map(Some),
    )
}

/// Where a device ranker is in the collaborative training sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Fresh,
    Independent,
    Cooperative,
    Adaptive,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Fresh => "fresh",
            Phase::Independent => "independent",
            Phase::Cooperative => "cooperative",
            Phase::Adaptive => "adaptive",
        }
    }
}

/// Owns a device ranker and enforces the phase order
/// independent, then optionally cooperative, then optionally adaptive.
#[derive(Debug, Clone)]
pub struct DevicePipeline {
    device: Ranker,
    phase: Phase,
    reports: Vec<TrainReport>,
}

impl DevicePipeline {
    pub fn new(device: Ranker) -> Self {
        Self {
            device,
            phase: Phase::Fresh,
            reports: Vec::new(),
        }
    }

    /// Resumes from a device that already completed `phase`.
    pub fn resume(device: Ranker, phase: Phase) -> Self {
        Self {
            device,
            phase,
            reports: Vec::new(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn device(&self) -> &Ranker {
        &self.device
    }

    pub fn reports(&self) -> &[TrainReport] {
        &self.reports
    }

    pub fn into_device(self) -> Ranker {
        self.device
    }

    pub fn independent(
        &mut self,
        data: &[(UserId, &[ItemId])],
        sampler: &NegativeSampler,
    ) -> Result<&TrainReport> {
        self.check(&[Phase::Fresh], Phase::Independent)?;
        let cfg = self.device.config().clone();
        let rep = train_independent(&mut self.device, data, sampler, &cfg)?;
        self.finish(Phase::Independent, rep)
    }

    pub fn cooperative(
        &mut self,
        cloud: &Ranker,
        data: &[(UserId, &[ItemId])],
        cfg: &CollabConfig,
    ) -> Result<&TrainReport> {
        self.check(&[Phase::Independent], Phase::Cooperative)?;
        let rep = train_cooperative(&mut self.device, cloud, data, cfg)?;
        self.finish(Phase::Cooperative, rep)
    }

    pub fn adaptive(&mut self, data: &[(UserId, &[ItemId])], cfg: &CollabConfig) -> Result<&TrainReport> {
        self.check(&[Phase::Independent, Phase::Cooperative], Phase::Adaptive)?;
        let rep = retrain_adaptive(&mut self.device, data, cfg)?;
        self.finish(Phase::Adaptive, rep)
    }

    fn check(&self, allowed_from: &[Phase], next: Phase) -> Result<()> {
        if allowed_from.contains(&self.phase) {
            Ok(())
        } else {
            Err(Error::PhaseOrder {
                current: self.phase.name(),
                attempted: next.name(),
            })
        }
    }

    fn finish(&mut self, phase: Phase, rep: TrainReport) -> Result<&TrainReport> {
        self.phase = phase;
        self.reports.push(rep);
        Ok(self.reports.last().expect("just pushed"))
    }
}
