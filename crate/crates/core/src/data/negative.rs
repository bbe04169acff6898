use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::{ItemId, UserId};

/// Uniform sampler over the items a user has not interacted with.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    n_items: usize,
    /// Sorted, deduplicated positives per dense user id.
    positives: Vec<Vec<ItemId>>,
    /// Negatives drawn per positive during training.
    pub rate: usize,
    /// Evaluation ranks against the whole catalog rather than a sample.
    pub eval_all_items: bool,
}

impl NegativeSampler {
    pub fn new<'a, I>(n_items: usize, sequences: I, rate: usize) -> Self
    where
        I: IntoIterator<Item = (UserId, &'a [ItemId])>,
    {
        let mut positives: Vec<Vec<ItemId>> = Vec::new();
        for (user, items) in sequences {
            if positives.len() <= user.index() {
                positives.resize(user.index() + 1, Vec::new());
            }
            let row = &mut positives[user.index()];
            row.extend_from_slice(items);
            row.sort_unstable();
            row.dedup();
        }
        Self {
            n_items,
            positives,
            rate,
            eval_all_items: true,
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn positives(&self, user: UserId) -> &[ItemId] {
        self.positives
            .get(user.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_positive(&self, user: UserId, item: ItemId) -> bool {
        self.positives(user).binary_search(&item).is_ok()
    }

    /// `k` distinct items the user has never interacted with.
    pub fn sample_negatives(&self, user: UserId, k: usize, rng: &mut Rng) -> Result<Vec<ItemId>> {
        let pos = self.positives(user);
        let available = self.n_items - pos.len();
        if k > available {
            return Err(Error::InsufficientNegatives {
                user,
                requested: k,
                available,
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        // Rejection sampling is fast while the feasible set is large; near
        // saturation enumerate and partially shuffle instead.
        if 4 * k <= available {
            let mut out: Vec<ItemId> = Vec::with_capacity(k);
            while out.len() < k {
                let cand = ItemId(rng.below(self.n_items) as u32);
                if pos.binary_search(&cand).is_err() && !out.contains(&cand) {
                    out.push(cand);
                }
            }
            Ok(out)
        } else {
            let mut pool: Vec<ItemId> = (0..self.n_items as u32)
                .map(ItemId)
                .filter(|i| pos.binary_search(i).is_err())
                .collect();
            for i in 0..k {
                let j = i + rng.below(pool.len() - i);
                pool.swap(i, j);
            }
            pool.truncate(k);
            Ok(pool)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[u32]) -> Vec<ItemId> {
        xs.iter().map(|&x| ItemId(x)).collect()
    }

    #[test]
    fn forced_outcome() {
        let owned = ids(&[0, 1, 2, 4]);
        let s = NegativeSampler::new(5, [(UserId(0), owned.as_slice())], 1);
        let mut rng = Rng::new(1);
        assert_eq!(s.sample_negatives(UserId(0), 1, &mut rng).unwrap(), ids(&[3]));
    }

    #[test]
    fn zero_k_is_empty() {
        let owned = ids(&[0]);
        let s = NegativeSampler::new(5, [(UserId(0), owned.as_slice())], 1);
        assert!(s.sample_negatives(UserId(0), 0, &mut Rng::new(1)).unwrap().is_empty());
    }

    #[test]
    fn infeasible_k() {
        let owned = ids(&[0, 1, 2]);
        let s = NegativeSampler::new(4, [(UserId(0), owned.as_slice())], 1);
        let err = s.sample_negatives(UserId(0), 2, &mut Rng::new(1)).unwrap_err();
        assert!(matches!(err, Error::InsufficientNegatives { available: 1, .. }));
    }

    #[test]
    fn deterministic_and_distinct() {
        let owned = ids(&[3, 7, 11]);
        let s = NegativeSampler::new(50, [(UserId(2), owned.as_slice())], 1);
        let a = s.sample_negatives(UserId(2), 10, &mut Rng::new(9)).unwrap();
        let b = s.sample_negatives(UserId(2), 10, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
    }

    #[test]
    fn unseen_user_has_no_positives() {
        let s = NegativeSampler::new(3, std::iter::empty(), 1);
        assert_eq!(s.sample_negatives(UserId(5), 3, &mut Rng::new(0)).unwrap().len(), 3);
    }
}
