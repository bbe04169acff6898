use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::CandidateSlate;
use crate::model::Ranker;
use crate::model::params::dot;
use crate::types::ItemId;

/// A candidate slate plus its embedding-space neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSlate {
    pub base: CandidateSlate,
    /// Added neighbours, ascending by id, disjoint from `base`.
    pub extra: Vec<ItemId>,
    pub k_aug: usize,
}

impl AugmentedSlate {
    /// Base items in slate order, then the extras.
    pub fn all_items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.base.items().iter().copied().chain(self.extra.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.base.len() + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// The `k` items most cosine-similar to each item in the cloud ranker's
/// embedding space, by descending similarity then ascending id. An item is
/// never its own neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborTable {
    k: usize,
    neighbors: Vec<Vec<ItemId>>,
}

impl NeighborTable {
    pub fn build(cloud: &Ranker, k: usize) -> Result<Self> {
        use rayon::prelude::*;

        let n = cloud.n_items();
        check_k(k, n)?;
        let neighbors = (0..n)
            .into_par_iter()
            .map(|i| {
                let e = cloud.item_embedding(ItemId(i as u32));
                top_k_similar(i, k, |j| cosine(e, cloud.item_embedding(ItemId(j as u32))), n)
            })
            .collect();
        Ok(Self { k, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, item: ItemId) -> &[ItemId] {
        &self.neighbors[item.index()]
    }

    /// Augments `slate` with the neighbours of its items.
    pub fn augment(&self, slate: &CandidateSlate) -> Result<AugmentedSlate> {
        if slate.is_empty() {
            return Err(Error::EmptySlate);
        }
        for &it in slate.items() {
            if it.index() >= self.neighbors.len() {
                return Err(Error::UnknownItem(it));
            }
        }
        Ok(collect_extra(slate, self.k, |it| self.neighbors(it).to_vec()))
    }
}

fn check_k(k_aug: usize, n_items: usize) -> Result<()> {
    if k_aug >= n_items {
        Err(Error::InvalidAugmentation { k_aug, n_items })
    } else {
        Ok(())
    }
}

fn top_k_similar(i: usize, k: usize, sim: impl Fn(usize) -> f64, n: usize) -> Vec<ItemId> {
    if k == 0 {
        return Vec::new();
    }
    let mut cands: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (sim(j), j)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, cmp);
        cands.truncate(k);
    }
    cands.sort_unstable_by(cmp);
    cands.into_iter().map(|(_, j)| ItemId(j as u32)).collect()
}

fn collect_extra(
    slate: &CandidateSlate,
    k_aug: usize,
    mut neighbors: impl FnMut(ItemId) -> Vec<ItemId>,
) -> AugmentedSlate {
    let base: BTreeSet<ItemId> = slate.items().iter().copied().collect();
    let mut extra = BTreeSet::new();
    if k_aug > 0 {
        for &it in slate.items() {
            extra.extend(neighbors(it).into_iter().filter(|q| !base.contains(q)));
        }
    }
    AugmentedSlate {
        base: slate.clone(),
        extra: extra.into_iter().collect(),
        k_aug,
    }
}

/// Adds each slate item's `k_aug` nearest neighbours (cosine similarity of
/// the cloud item embeddings), skipping items already in the slate.
///
/// Deterministic; the result does not depend on the slate's order. For many
/// slates against one cloud ranker, build a [`NeighborTable`] once instead.
pub fn augment(slate: &CandidateSlate, cloud: &Ranker, k_aug: usize) -> Result<AugmentedSlate> {
    if slate.is_empty() {
        return Err(Error::EmptySlate);
    }
    let n = cloud.n_items();
    check_k(k_aug, n)?;
    for &it in slate.items() {
        if it.index() >= n {
            return Err(Error::UnknownItem(it));
        }
    }
    Ok(collect_extra(slate, k_aug, |it| {
        let e = cloud.item_embedding(it);
        top_k_similar(
            it.index(),
            k_aug,
            |j| cosine(e, cloud.item_embedding(ItemId(j as u32))),
            n,
        )
    }))
}
