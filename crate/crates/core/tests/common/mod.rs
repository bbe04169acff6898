#![allow(dead_code)]

use dcrec::config::RunConfig;
use dcrec::data::{DatasetSplits, DriftSpec};
use dcrec::model::{EncoderKind, OptimizerKind, Ranker, RankerConfig};
use dcrec::simeval::{cohorts, finish_device, prepare_splits, pretrain_device, train_cloud, Cohorts, TrainingArm};
use dcrec::types::ItemId;

/// A run config small enough to train in well under a second.
pub fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.drift = DriftSpec {
        n_users: 120,
        n_items: 60,
        seq_len: 12,
        n_interest_clusters: 6,
        n_styles: 3,
        style_affinity: 0.8,
        ..DriftSpec::default()
    };
    cfg.cloud = RankerConfig {
        emb_dim: 8,
        encoder: EncoderKind::MeanPool,
        max_seq_len: 3,
        optimizer: OptimizerKind::Adam,
        lr: 0.02,
        epochs: 3,
        neg_rate: 2,
        ..RankerConfig::default()
    };
    cfg.device = RankerConfig {
        emb_dim: 4,
        encoder: EncoderKind::GatedRecurrent,
        max_seq_len: 3,
        optimizer: OptimizerKind::Adam,
        lr: 0.02,
        epochs: 2,
        ..RankerConfig::default()
    };
    cfg.collab.coop_epochs = 1;
    cfg.collab.adaptive_epochs = 1;
    cfg.sim.k = 20;
    cfg
}

pub struct Fixture {
    pub cfg: RunConfig,
    pub splits: DatasetSplits,
    pub cloud: Ranker,
    pub device: Ranker,
    pub groups: Cohorts,
}

pub fn fixture(seed: u64) -> Fixture {
    let cfg = small_config();
    let splits = prepare_splits(&cfg, seed, None).unwrap();
    let (cloud, _) = train_cloud(&cfg, &splits, seed).unwrap();
    let (pre, _) = pretrain_device(&cfg, &splits, seed).unwrap();
    let (device, _) = finish_device(&pre, &cloud, &splits, &cfg.collab, TrainingArm::from_collab(&cfg.collab)).unwrap();
    let groups = cohorts(&splits, cfg.data.calibration_fraction, seed);
    Fixture {
        cfg,
        splits,
        cloud,
        device,
        groups,
    }
}

pub fn ids(xs: &[u32]) -> Vec<ItemId> {
    xs.iter().map(|&x| ItemId(x)).collect()
}
