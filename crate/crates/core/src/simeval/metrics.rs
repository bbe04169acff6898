use serde::{Deserialize, Serialize};

use crate::types::{ItemId, UserId};

/// One user's final ranking and held-out target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalCase {
    pub user: UserId,
    pub final_order: Vec<ItemId>,
    pub target: ItemId,
}

impl EvalCase {
    /// 0-based position of the target, if it was ranked at all.
    pub fn rank(&self) -> Option<usize> {
        self.final_order.iter().position(|&q| q == self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ndcg,
    Hr,
    Precision,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ndcg, Metric::Hr, Metric::Precision];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ndcg => "ndcg",
            Metric::Hr => "hr",
            Metric::Precision => "precision",
        }
    }

    /// Value at cutoff `k` for a target at 0-based `rank` (`None` is a miss).
    pub fn at_rank(self, rank: Option<usize>, k: usize) -> f64 {
        match rank {
            Some(r) if r < k => match self {
                Metric::Ndcg => 1.0 / ((r + 2) as f64).log2(),
                Metric::Hr => 1.0,
                Metric::Precision => 1.0 / k as f64,
            },
            _ => 0.0,
        }
    }
}

pub fn metric_ndcg(case: &EvalCase, k: usize) -> f64 {
    Metric::Ndcg.at_rank(case.rank(), k)
}

pub fn metric_hr(case: &EvalCase, k: usize) -> f64 {
    Metric::Hr.at_rank(case.rank(), k)
}

pub fn metric_precision(case: &EvalCase, k: usize) -> f64 {
    Metric::Precision.at_rank(case.rank(), k)
}
