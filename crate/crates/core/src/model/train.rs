use serde::{Deserialize, Serialize};

use super::config::{LossKind, OptimizerKind, RankerConfig};
use super::params::Params;
use super::ranker::Ranker;
use crate::data::NegativeSampler;
use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::types::{ItemId, UserId};

/// One next-item prediction example: `history` (already windowed) predicts
/// `target`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSample {
    pub user: UserId,
    pub history: Vec<ItemId>,
    pub target: ItemId,
}

/// Every `(prefix, next item)` pair of every sequence, prefixes windowed to
/// `max_len`. The first event of a sequence has no history and is skipped.
pub fn training_samples(data: &[(UserId, &[ItemId])], max_len: usize) -> Vec<TrainSample> {
    let mut out = Vec::new();
    for &(user, seq) in data {
        for t in 1..seq.len() {
            let start = t.saturating_sub(max_len);
            out.push(TrainSample {
                user,
                history: seq[start..t].to_vec(),
                target: seq[t],
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub samples: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub phase: String,
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
    /// Samples that contributed no gradient (e.g. no negatives available).
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl TrainReport {
    pub fn empty(phase: &str, warning: Option<String>) -> Self {
        Self {
            phase: phase.to_owned(),
            epochs: Vec::new(),
            steps: 0,
            skipped: 0,
            warning,
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    /// One JSON object per epoch, then a summary line.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for e in &self.epochs {
            let line = serde_json::json!({
                "phase": self.phase,
                "epoch": e.epoch,
                "mean_loss": e.mean_loss,
                "samples": e.samples,
                "skipped": e.skipped,
            });
            writeln!(w, "{line}")?;
        }
        let summary = serde_json::json!({
            "phase": self.phase,
            "steps": self.steps,
            "skipped": self.skipped,
            "final_loss": self.final_loss(),
            "warning": self.warning,
        });
        writeln!(w, "{summary}")?;
        Ok(())
    }
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    m: Option<Params>,
    v: Option<Params>,
    t: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(cfg: &RankerConfig) -> Self {
        Self {
            kind: cfg.optimizer,
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            m: None,
            v: None,
            t: 0,
        }
    }

    /// Applies `grads * scale` with decoupled weight decay.
    fn step(&mut self, params: &mut Params, grads: &Params, scale: f64) {
        let (lr, wd) = (self.lr, self.weight_decay);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    *p -= lr * (g * scale + wd * *p);
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let m = self.m.get_or_insert_with(|| params.zeros_like());
                let v = self.v.get_or_insert_with(|| params.zeros_like());
                let c1 = 1.0 - Self::BETA1.powi(self.t);
                let c2 = 1.0 - Self::BETA2.powi(self.t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    let g = g * scale;
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                    *p -= lr * (update + wd * *p);
                }
            }
        }
        params.round_to_f32();
    }
}

/// Phase tags keep the shuffling and sampling streams of different training
/// phases disjoint.
#[derive(Debug, Clone, Copy)]
pub(crate) enum PhaseTag {
    Independent = 1,
    Cooperative = 2,
    Adaptive = 3,
}

/// Mini-batch training loop shared by every phase. `negatives` returns the
/// negatives for a sample, or `None` to skip it.
pub(crate) fn fit<F>(
    ranker: &mut Ranker,
    samples: &[TrainSample],
    cfg: &RankerConfig,
    loss: LossKind,
    phase: &str,
    tag: PhaseTag,
    mut negatives: F,
) -> Result<TrainReport>
where
    F: FnMut(usize, &TrainSample, &mut Rng) -> Result<Option<Vec<ItemId>>>,
{
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let mut opt = Optimizer::new(cfg);
    let mut grads = ranker.params().zeros_like();
    let mut report = TrainReport::empty(phase, None);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..cfg.epochs {
        let stream_idx = ((tag as u64) << 32) | epoch as u64;
        root.substream(Stream::Shuffle, stream_idx).shuffle(&mut order);
        let mut neg_rng = root.substream(Stream::Negatives, stream_idx);
        let (mut total, mut seen, mut skipped) = (0.0, 0usize, 0usize);

        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let mut count = 0usize;
            for &idx in batch {
                let sample = &samples[idx];
                let Some(negs) = negatives(idx, sample, &mut neg_rng)? else {
                    skipped += 1;
                    continue;
                };
                let l = ranker.sample_loss_grad(
                    &sample.history,
                    sample.target,
                    &negs,
                    loss,
                    &mut grads,
                )?;
                if !l.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        step: report.steps,
                    });
                }
                total += l;
                count += 1;
            }
            if count > 0 {
                opt.step(ranker.params_mut(), &grads, 1.0 / count as f64);
                if !ranker.params().all_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        step: report.steps,
                    });
                }
                report.steps += 1;
                seen += count;
            }
        }
        report.skipped += skipped;
        report.epochs.push(EpochStats {
            epoch,
            mean_loss: if seen > 0 { total / seen as f64 } else { 0.0 },
            samples: seen,
            skipped,
        });
    }
    Ok(report)
}

/// Sampled-negative training on per-user sequences.
pub fn train_independent(
    ranker: &mut Ranker,
    data: &[(UserId, &[ItemId])],
    sampler: &NegativeSampler,
    cfg: &RankerConfig,
) -> Result<TrainReport> {
    let samples = training_samples(data, ranker.config().max_seq_len);
    if samples.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    fit(
        ranker,
        &samples,
        cfg,
        cfg.loss,
        "independent",
        PhaseTag::Independent,
        |_, s, rng| {
            sampler
                .sample_negatives(s.user, cfg.neg_rate, rng)
                .map(Some)
        },
    )
}
