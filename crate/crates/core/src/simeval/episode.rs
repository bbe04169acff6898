use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::Metric;
use super::report::{MetricValue, SimReport};
use crate::data::DatasetSplits;
use crate::digest::combine;
use crate::error::{Error, Result};
use crate::infer::{
    device_rerank, fuse, CandidateSlate, CloudGateway, FusionConfig, RequestGrant, SlateProvider,
};
use crate::model::Ranker;
use crate::request::{decide, inconsistency, RequestPolicy};
use crate::rng::{Rng, Stream};
use crate::types::{ItemId, UserId};

/// Bytes per item id on the wire.
pub const ID_BYTES: u64 = 4;
/// Bytes per score on the wire.
pub const SCORE_BYTES: u64 = 4;

/// How the final ranking is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceArm {
    /// The cloud slate in its initial order.
    CloudOnly,
    /// The device ranks the whole catalog from its real-time history.
    DeviceOnly,
    /// The device's reranking of the cloud slate, ignoring cloud scores.
    BothNoFusion,
    /// Fused cloud and device scores over the slate.
    BothFusion,
}

impl InferenceArm {
    pub fn name(self) -> &'static str {
        match self {
            InferenceArm::CloudOnly => "cloud-only",
            InferenceArm::DeviceOnly => "device-only",
            InferenceArm::BothNoFusion => "both-no-fusion",
            InferenceArm::BothFusion => "both+fusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Slate length requested from the cloud.
    pub k: usize,
    /// Lag the splits were built with; checked against them.
    pub delta_t: usize,
    pub fusion: FusionConfig,
    pub arm: InferenceArm,
    /// `None` never requests.
    pub policy: Option<RequestPolicy>,
    /// Every user uploads its real-time history up front; the upper bound
    /// on what refresh requests can buy.
    pub realtime_cloud: bool,
    pub metrics_k: Vec<usize>,
    pub seed: u64,
    pub label: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            k: 50,
            delta_t: crate::data::DEFAULT_DELTA_T,
            fusion: FusionConfig::default(),
            arm: InferenceArm::BothFusion,
            policy: None,
            realtime_cloud: false,
            metrics_k: vec![5, 10, 20],
            seed: 0,
            label: "both+fusion".into(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        if self.metrics_k.is_empty() || self.metrics_k.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "metrics_k must be non-empty and strictly ascending".into(),
            ));
        }
        if self.metrics_k[0] == 0 {
            return Err(Error::InvalidConfig("metric cutoffs must be positive".into()));
        }
        let kmax = *self.metrics_k.last().expect("non-empty");
        if self.k < kmax {
            return Err(Error::InvalidConfig(format!(
                "slate length {} is shorter than the largest cutoff {kmax}",
                self.k
            )));
        }
        if let Some(p) = &self.policy {
            p.validate()?;
        }
        Ok(())
    }
}

/// What happened for one evaluated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub user: UserId,
    /// Inconsistency between the cloud's first slate order and the device's.
    pub c: f64,
    pub requested: bool,
    /// 0-based rank of the test target in the final order.
    pub rank: Option<usize>,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

/// Runs [`run_episode_with`] through a fresh, unaudited gateway.
pub fn run_episode(
    cloud: &dyn SlateProvider,
    device: &Ranker,
    splits: &DatasetSplits,
    users: &[UserId],
    cfg: &SimConfig,
) -> Result<SimReport> {
    run_episode_with(&CloudGateway::new(cloud, splits), device, users, cfg)
}

/// Evaluates every user in `users` on its test target:
///
/// 1. the cloud builds a slate from the lagged history,
/// 2. the device rescores it from the real-time history,
/// 3. the inconsistency between the two orders is computed,
/// 4. the policy decides whether to request; a granted request rebuilds the
///    slate from the real-time history and the device rescores it,
/// 5. the arm forms the final order, which is scored against the target.
///
/// Users are processed in parallel; aggregation runs in user order so the
/// report does not depend on the thread count.
pub fn run_episode_with(
    gateway: &CloudGateway<'_>,
    device: &Ranker,
    users: &[UserId],
    cfg: &SimConfig,
) -> Result<SimReport> {
    cfg.validate()?;
    let splits = gateway.splits();
    if splits.delta_t != cfg.delta_t {
        return Err(Error::InvalidConfig(format!(
            "simulation expects delta_t {}, splits use {}",
            cfg.delta_t, splits.delta_t
        )));
    }
    if users.is_empty() {
        return Err(Error::EmptyInput("no users to evaluate"));
    }
    let outcomes: Vec<UserOutcome> = users
        .par_iter()
        .map(|&u| evaluate_user(gateway, device, u, cfg))
        .collect::<Result<_>>()?;
    Ok(aggregate(cfg, outcomes))
}

fn policy_rng(policy: &RequestPolicy, cfg: &SimConfig, user: UserId) -> Rng {
    Rng::new(combine(policy.seed, cfg.seed)).substream(Stream::Policy, user.0 as u64)
}

fn evaluate_user(
    gateway: &CloudGateway<'_>,
    device: &Ranker,
    user: UserId,
    cfg: &SimConfig,
) -> Result<UserOutcome> {
    let splits = gateway.splits();
    let split = splits.user(user)?;
    let target = split.test_target;
    let upload = split.realtime.len() as u64 * ID_BYTES;
    let download = cfg.k as u64 * (ID_BYTES + SCORE_BYTES);

    if cfg.arm == InferenceArm::DeviceOnly {
        let scores = device.score_all(&split.realtime)?;
        let items: Vec<ItemId> = (0..scores.len() as u32).map(ItemId).collect();
        let order = crate::infer::order_by_scores(&items, &scores);
        return Ok(UserOutcome {
            user,
            c: 0.0,
            requested: false,
            rank: order.iter().position(|&q| q == target),
            bytes_up: 0,
            bytes_down: 0,
        });
    }

    let first = if cfg.realtime_cloud {
        gateway.refreshed_slate(RequestGrant::new(user), cfg.k)?
    } else {
        gateway.lagged_slate(user, cfg.k)?
    };
    let rerank = device_rerank(device, splits, user, &first)?;
    let rerank_order = crate::infer::order_by_scores(first.items(), rerank.as_slice());
    let c = inconsistency(first.init_ranking(), &rerank_order)?;

    let mut requested = cfg.realtime_cloud;
    let (slate, rerank) = match &cfg.policy {
        Some(policy) if !cfg.realtime_cloud => {
            let mut rng = policy_rng(policy, cfg, user);
            if decide(policy, &c, &mut rng) {
                requested = true;
                let fresh = gateway.refreshed_slate(RequestGrant::new(user), cfg.k)?;
                let scores = device_rerank(device, splits, user, &fresh)?;
                (fresh, scores)
            } else {
                (first, rerank)
            }
        }
        _ => (first, rerank),
    };

    let order = final_order(&slate, &rerank, cfg)?;
    Ok(UserOutcome {
        user,
        c: c.c,
        requested,
        rank: order.iter().position(|&q| q == target),
        bytes_up: if requested { upload } else { 0 },
        bytes_down: if requested { download } else { 0 },
    })
}

fn final_order(
    slate: &CandidateSlate,
    rerank: &crate::model::ScoreVector,
    cfg: &SimConfig,
) -> Result<Vec<ItemId>> {
    match cfg.arm {
        InferenceArm::CloudOnly => Ok(slate.init_ranking().to_vec()),
        InferenceArm::BothNoFusion => {
            let fc = FusionConfig {
                alpha: 0.0,
                ..cfg.fusion
            };
            Ok(fuse(slate, rerank, &fc)?.final_order)
        }
        InferenceArm::BothFusion => Ok(fuse(slate, rerank, &cfg.fusion)?.final_order),
        InferenceArm::DeviceOnly => unreachable!("handled before any cloud access"),
    }
}

fn aggregate(cfg: &SimConfig, outcomes: Vec<UserOutcome>) -> SimReport {
    let n = outcomes.len();
    let mut metrics = Vec::new();
    for metric in Metric::ALL {
        for &k in &cfg.metrics_k {
            let total: f64 = outcomes.iter().map(|o| metric.at_rank(o.rank, k)).sum();
            metrics.push(MetricValue {
                metric,
                k,
                value: total / n as f64,
            });
        }
    }
    let request_count = outcomes.iter().filter(|o| o.requested).count();
    SimReport {
        arm: cfg.label.clone(),
        seed: cfg.seed,
        n_users: n,
        metrics,
        request_count,
        request_rate: request_count as f64 / n as f64,
        bytes_up: outcomes.iter().map(|o| o.bytes_up).sum(),
        bytes_down: outcomes.iter().map(|o| o.bytes_down).sum(),
        missing_targets: outcomes.iter().filter(|o| o.rank.is_none()).count(),
        mean_inconsistency: outcomes.iter().map(|o| o.c).sum::<f64>() / n as f64,
        outcomes,
    }
}
