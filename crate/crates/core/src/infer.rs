//! Collaborative inference: the cloud proposes a candidate slate from the
//! lagged history, the device rescores it from the real-time history, and the
//! two score vectors are min-max normalized and blended.

use std::cmp::Ordering;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSplits;
use crate::error::{Error, Result};
use crate::model::{Ranker, ScoreVector};
use crate::types::{ItemId, UserId};

/// Candidate items in initial-ranking order, with the cloud's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSlate {
    items: Vec<ItemId>,
    init_scores: Vec<f64>,
}

impl CandidateSlate {
    /// Validates distinct items, finite non-increasing scores, and ascending
    /// item ids among equal scores.
    pub fn new(items: Vec<ItemId>, init_scores: Vec<f64>) -> Result<Self> {
        if items.len() != init_scores.len() {
            return Err(Error::Alignment {
                items: items.len(),
                scores: init_scores.len(),
            });
        }
        if let Some(i) = init_scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteScore(i));
        }
        let mut seen = items.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSlate("duplicate item".into()));
        }
        for i in 1..items.len() {
            let ord = init_scores[i - 1].total_cmp(&init_scores[i]);
            if ord == Ordering::Less || (ord == Ordering::Equal && items[i - 1] > items[i]) {
                return Err(Error::InvalidSlate(format!("out of order at position {i}")));
            }
        }
        Ok(Self { items, init_scores })
    }

    pub(crate) fn from_sorted(items: Vec<ItemId>, init_scores: Vec<f64>) -> Self {
        debug_assert!(Self::new(items.clone(), init_scores.clone()).is_ok());
        Self { items, init_scores }
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn scores(&self) -> &[f64] {
        &self.init_scores
    }

    /// The initial ranking is the slate order itself.
    pub fn init_ranking(&self) -> &[ItemId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.contains(&item)
    }

    pub fn to_message(&self, user: UserId) -> SlateMessage {
        SlateMessage {
            user,
            items: self.items.clone(),
            scores: self.init_scores.clone(),
        }
    }
}

/// Line-JSON slate exchange record: `{"user":..,"items":[..],"scores":[..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlateMessage {
    pub user: UserId,
    pub items: Vec<ItemId>,
    pub scores: Vec<f64>,
}

impl SlateMessage {
    pub fn into_slate(self) -> Result<CandidateSlate> {
        CandidateSlate::new(self.items, self.scores)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("slate messages serialize")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    /// Weight on the cloud's normalized score; `1 - alpha` goes to the device.
    pub alpha: f64,
    /// Items whose normalized scores are both below this floor are dropped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_floor: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            filter_floor: None,
        }
    }
}

impl FusionConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            filter_floor: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        if let Some(f) = self.filter_floor {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("filter_floor {f} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Every intermediate of a fusion, aligned with the slate order, plus the
/// final ranking over the items that survived filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRanking {
    pub items: Vec<ItemId>,
    pub rerank_scores: Vec<f64>,
    pub norm_init: Vec<f64>,
    pub norm_rerank: Vec<f64>,
    pub alpha: f64,
    pub fused: Vec<f64>,
    pub final_order: Vec<ItemId>,
}

impl FusedRanking {
    /// The device's own ordering of the slate, before any blending.
    pub fn rerank_order(&self) -> Vec<ItemId> {
        order_by_scores(&self.items, &self.rerank_scores)
    }
}

/// Min-max scaling to `[0, 1]`. A constant vector maps to all `0.5`.
pub fn normalize(scores: &ScoreVector) -> Result<ScoreVector> {
    normalize_slice(scores.as_slice()).map(ScoreVector::new)
}

fn normalize_slice(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::EmptyScores);
    }
    if let Some(i) = xs.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; xs.len()]);
    }
    let range = hi - lo;
    Ok(xs.iter().map(|x| ((x - lo) / range).clamp(0.0, 1.0)).collect())
}

/// Items sorted by descending score; equal scores by ascending id.
pub fn order_by_scores(items: &[ItemId], scores: &[f64]) -> Vec<ItemId> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(items[a].cmp(&items[b])));
    idx.into_iter().map(|i| items[i]).collect()
}

pub fn fuse(
    slate: &CandidateSlate,
    rerank_scores: &ScoreVector,
    cfg: &FusionConfig,
) -> Result<FusedRanking> {
    cfg.validate()?;
    if slate.len() != rerank_scores.len() {
        return Err(Error::Alignment {
            items: slate.len(),
            scores: rerank_scores.len(),
        });
    }
    let norm_init = normalize_slice(slate.scores())?;
    let norm_rerank = normalize_slice(rerank_scores.as_slice())?;
    let alpha = cfg.alpha;
    let fused: Vec<f64> = norm_init
        .iter()
        .zip(&norm_rerank)
        .map(|(i, r)| alpha * i + (1.0 - alpha) * r)
        .collect();

    let keep = |j: usize| match cfg.filter_floor {
        Some(f) => !(norm_init[j] < f && norm_rerank[j] < f),
        None => true,
    };
    let kept: Vec<usize> = (0..slate.len()).filter(|&j| keep(j)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyAfterFilter {
            floor: cfg.filter_floor.unwrap_or(0.0),
        });
    }
    let kept_items: Vec<ItemId> = kept.iter().map(|&j| slate.items()[j]).collect();
    let kept_fused: Vec<f64> = kept.iter().map(|&j| fused[j]).collect();
    Ok(FusedRanking {
        items: slate.items().to_vec(),
        rerank_scores: rerank_scores.as_slice().to_vec(),
        norm_init,
        norm_rerank,
        alpha,
        fused,
        final_order: order_by_scores(&kept_items, &kept_fused),
    })
}

/// Anything that can produce a candidate slate from a history: the in-process
/// cloud ranker, or a remote provider behind the bridge.
pub trait SlateProvider: Sync {
    fn provide(&self, user: UserId, history: &[ItemId], k: usize) -> Result<CandidateSlate>;
}

impl SlateProvider for Ranker {
    fn provide(&self, _user: UserId, history: &[ItemId], k: usize) -> Result<CandidateSlate> {
        self.recall_topk(history, k)
    }
}

/// Which slice of a user's data reached the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudView {
    Lagged,
    Realtime,
}

/// Permission to upload one user's real-time history. Only the request
/// policy in the simulator mints these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestGrant {
    user: UserId,
}

impl RequestGrant {
    pub(crate) fn new(user: UserId) -> Self {
        Self { user }
    }

    pub fn user(&self) -> UserId {
        self.user
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CloudAccess {
    pub user: UserId,
    pub view: CloudView,
}

/// The only path from user data to the cloud. It resolves histories from the
/// splits itself, so callers cannot hand the cloud real-time data without a
/// [`RequestGrant`]. With auditing on, every access is recorded.
pub struct CloudGateway<'a> {
    provider: &'a dyn SlateProvider,
    splits: &'a DatasetSplits,
    audit: Option<Mutex<Vec<CloudAccess>>>,
}

impl<'a> CloudGateway<'a> {
    pub fn new(provider: &'a dyn SlateProvider, splits: &'a DatasetSplits) -> Self {
        Self {
            provider,
            splits,
            audit: None,
        }
    }

    pub fn splits(&self) -> &'a DatasetSplits {
        self.splits
    }

    pub fn with_audit(mut self) -> Self {
        self.audit = Some(Mutex::new(Vec::new()));
        self
    }

    fn record(&self, user: UserId, view: CloudView) {
        if let Some(log) = &self.audit {
            log.lock().expect("audit lock").push(CloudAccess { user, view });
        }
    }

    /// Slate from the near-real-time (lagged) history.
    pub fn lagged_slate(&self, user: UserId, k: usize) -> Result<CandidateSlate> {
        let split = self.splits.user(user)?;
        self.record(user, CloudView::Lagged);
        self.provider.provide(user, &split.lagged, k)
    }

    /// Slate regenerated from the fresh history after a granted request.
    pub fn refreshed_slate(&self, grant: RequestGrant, k: usize) -> Result<CandidateSlate> {
        let split = self.splits.user(grant.user)?;
        self.record(grant.user, CloudView::Realtime);
        self.provider.provide(grant.user, &split.realtime, k)
    }

    /// Accesses so far, sorted by user then view (workers may interleave).
    pub fn audit_log(&self) -> Vec<CloudAccess> {
        let mut log = self
            .audit
            .as_ref()
            .map(|m| m.lock().expect("audit lock").clone())
            .unwrap_or_default();
        log.sort_by_key(|a| (a.user, a.view == CloudView::Realtime));
        log
    }
}

/// Device-side rescoring of a slate from the real-time history.
pub fn device_rerank(
    device: &Ranker,
    splits: &DatasetSplits,
    user: UserId,
    slate: &CandidateSlate,
) -> Result<ScoreVector> {
    let split = splits.user(user)?;
    device.score_items(&split.realtime, slate.items())
}

/// Cloud slate from the lagged history, device scores from the real-time
/// history, then [`fuse`].
pub fn collaborative_infer(
    cloud: &Ranker,
    device: &Ranker,
    user: UserId,
    splits: &DatasetSplits,
    k: usize,
    cfg: &FusionConfig,
) -> Result<FusedRanking> {
    let gateway = CloudGateway::new(cloud, splits);
    let slate = gateway.lagged_slate(user, k)?;
    let rerank = device_rerank(device, splits, user, &slate)?;
    fuse(&slate, &rerank, cfg)
}
