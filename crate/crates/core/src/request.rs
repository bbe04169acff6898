//! Deciding when a device should spend budget on a fresh cloud slate.
//!
//! The device compares the cloud's initial ranking of the slate with its own
//! reranking. The inconsistency score is the mean absolute displacement of
//! each item between the two orders; when it reaches a threshold calibrated
//! from the allowed request load, the device uploads its real-time history.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::ItemId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyScore {
    /// Mean absolute positional displacement, in `[0, n - 1]`.
    pub c: f64,
    pub n: usize,
}

/// `c = (1/n) * sum_q |pos_init(q) - pos_rerank(q)|` over the shared items.
pub fn inconsistency(init_order: &[ItemId], rerank_order: &[ItemId]) -> Result<InconsistencyScore> {
    let n = init_order.len();
    if n == 0 {
        return Err(Error::EmptyInput("inconsistency of empty rankings"));
    }
    if rerank_order.len() != n {
        return Err(Error::NotAPermutation);
    }
    let pos: HashMap<ItemId, usize> = init_order.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    if pos.len() != n {
        return Err(Error::NotAPermutation);
    }
    let mut used = vec![false; n];
    let mut total = 0usize;
    for (j, q) in rerank_order.iter().enumerate() {
        let &i = pos.get(q).ok_or(Error::NotAPermutation)?;
        if std::mem::replace(&mut used[i], true) {
            return Err(Error::NotAPermutation);
        }
        total += i.abs_diff(j);
    }
    Ok(InconsistencyScore {
        c: total as f64 / n as f64,
        n,
    })
}

/// Outcome of threshold calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// `+inf` when the budget admits no requests.
    pub threshold: f64,
    pub budget: f64,
    /// Number of calibration scores.
    pub n: usize,
    /// Requests the budget allows on the calibration set: `floor(budget * n)`.
    pub allowed: usize,
    /// Calibration scores at or above the threshold. Exceeds `allowed` only
    /// when scores tie at the threshold.
    pub realized: usize,
    pub min: f64,
    pub max: f64,
}

impl Calibration {
    pub fn ties_exceed_budget(&self) -> bool {
        self.realized > self.allowed
    }

    pub fn realized_rate(&self) -> f64 {
        self.realized as f64 / self.n as f64
    }
}

/// Picks the threshold so that the top `floor(budget * N)` calibration scores
/// trigger a request: the `(N - k)`-th smallest score, 0-indexed.
pub fn calibrate_threshold(calibration_scores: &[f64], budget: f64) -> Result<Calibration> {
    if calibration_scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if !(0.0..=1.0).contains(&budget) {
        return Err(Error::InvalidConfig(format!("budget {budget} not in [0, 1]")));
    }
    if let Some(i) = calibration_scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    let n = calibration_scores.len();
    let mut sorted = calibration_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    let allowed = ((budget * n as f64) + 1e-9).floor() as usize;
    let allowed = allowed.min(n);
    let threshold = if allowed == 0 {
        f64::INFINITY
    } else {
        sorted[n - allowed]
    };
    let realized = sorted.iter().filter(|&&s| s >= threshold).count();
    Ok(Calibration {
        threshold,
        budget,
        n,
        allowed,
        realized,
        min: sorted[0],
        max: sorted[n - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over the observed score range. The last bin is
/// closed on the right.
pub fn histogram(scores: &[f64], bins: usize) -> Vec<HistogramBin> {
    if scores.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let b = (((s - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| {
            let a = lo + b as f64 * width;
            HistogramBin {
                lo: a,
                hi: a + width,
                count,
            }
        })
        .collect()
}

/// [`histogram`] as CSV (`bin_lo,bin_hi,count`).
pub fn histogram_csv(scores: &[f64], bins: usize) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for b in histogram(scores, bins) {
        out.push_str(&format!("{:.6},{:.6},{}\n", b.lo, b.hi, b.count));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Request when the inconsistency score reaches the calibrated threshold.
    Inconsistency,
    /// Request with probability `budget`, ignoring the score.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestPolicy {
    pub kind: PolicyKind,
    /// Target fraction of evaluation steps allowed to request.
    pub budget: f64,
    /// Calibrated threshold; required by the inconsistency kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl RequestPolicy {
    pub fn inconsistency(budget: f64, threshold: f64) -> Self {
        Self {
            kind: PolicyKind::Inconsistency,
            budget,
            threshold: Some(threshold),
            seed: 0,
        }
    }

    pub fn random(budget: f64, seed: u64) -> Self {
        Self {
            kind: PolicyKind::Random,
            budget,
            threshold: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.budget) {
            return Err(Error::InvalidConfig(format!(
                "budget {} not in [0, 1]",
                self.budget
            )));
        }
        if self.kind == PolicyKind::Inconsistency && self.threshold.is_none() {
            return Err(Error::MissingThreshold);
        }
        Ok(())
    }
}

/// Whether to request a fresh slate. An inconsistency policy without a
/// threshold never requests.
pub fn decide(policy: &RequestPolicy, c: &InconsistencyScore, rng: &mut Rng) -> bool {
    match policy.kind {
        PolicyKind::Inconsistency => policy.threshold.is_some_and(|t| c.c >= t),
        PolicyKind::Random => rng.unit() < policy.budget,
    }
}
