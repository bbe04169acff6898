use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{sequences_by_user, Interaction, ItemId, UserId};

/// Default lag between the device's real-time view and the cloud's view, in
/// interaction events.
pub const DEFAULT_DELTA_T: usize = 2;

/// One user's slice of every split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub user: UserId,
    /// Training-period prefix. The cloud ranker is trained on this and never
    /// sees anything later unless a refresh request is granted.
    pub historical: Vec<ItemId>,
    /// Everything observed on the device before the held-out targets.
    pub realtime: Vec<ItemId>,
    /// `realtime` minus its last `delta_t` events: the cloud's view.
    pub lagged: Vec<ItemId>,
    pub valid_target: ItemId,
    pub test_target: ItemId,
}

impl UserSplit {
    /// The events withheld from the cloud: `realtime[lagged.len()..]`.
    pub fn withheld(&self) -> &[ItemId] {
        &self.realtime[self.lagged.len()..]
    }

    /// Reassembles the original sequence.
    pub fn full_sequence(&self) -> Vec<ItemId> {
        let mut seq = self.lagged.clone();
        seq.extend_from_slice(self.withheld());
        seq.push(self.valid_target);
        seq.push(self.test_target);
        seq
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub n_items: usize,
    pub delta_t: usize,
    pub dropped_users: usize,
    /// Sorted by user id.
    pub users: Vec<UserSplit>,
}

impl DatasetSplits {
    pub fn user(&self, user: UserId) -> Result<&UserSplit> {
        self.users
            .binary_search_by_key(&user, |u| u.user)
            .map(|i| &self.users[i])
            .map_err(|_| Error::UnknownUser(user))
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn historical(&self) -> Vec<(UserId, &[ItemId])> {
        self.users
            .iter()
            .map(|u| (u.user, u.historical.as_slice()))
            .collect()
    }

    pub fn realtime(&self) -> Vec<(UserId, &[ItemId])> {
        self.users
            .iter()
            .map(|u| (u.user, u.realtime.as_slice()))
            .collect()
    }

    /// Checks every structural invariant; returns the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for w in self.users.windows(2) {
            if w[0].user >= w[1].user {
                return Err(format!("users not strictly sorted at {}", w[1].user));
            }
        }
        for u in &self.users {
            if !u.realtime.starts_with(&u.lagged) {
                return Err(format!("{}: lagged is not a prefix of realtime", u.user));
            }
            let gap = u.realtime.len() - u.lagged.len();
            if gap != self.delta_t.min(u.realtime.len()) {
                return Err(format!("{}: lag of {gap} events, expected {}", u.user, self.delta_t));
            }
            if u.historical != u.lagged {
                return Err(format!("{}: historical differs from lagged", u.user));
            }
            let all = u
                .realtime
                .iter()
                .chain([&u.valid_target, &u.test_target])
                .copied();
            if let Some(bad) = all.into_iter().find(|i| i.index() >= self.n_items) {
                return Err(format!("{}: item {bad} outside catalog", u.user));
            }
        }
        Ok(())
    }
}

/// Minimum sequence length a user needs to survive `build_splits`.
pub fn min_sequence_len(delta_t: usize) -> usize {
    delta_t + 3
}

/// Leave-one-out split with a lagged cloud view.
///
/// For a sequence `[.., e, f]`: `test_target = f`, `valid_target = e`,
/// `realtime` is everything before `e`, and `lagged` drops the last `delta_t`
/// events of `realtime`. Users shorter than `delta_t + 3` are dropped and
/// counted.
pub fn build_splits(
    interactions: &[Interaction],
    n_items: usize,
    delta_t: usize,
) -> Result<DatasetSplits> {
    let sequences = sequences_by_user(interactions);
    let min_len = min_sequence_len(delta_t);
    let mut users = Vec::new();
    let mut dropped = 0;
    for (uid, seq) in sequences.into_iter().enumerate() {
        if seq.is_empty() {
            continue;
        }
        if seq.len() < min_len {
            dropped += 1;
            continue;
        }
        let n = seq.len();
        let realtime = seq[..n - 2].to_vec();
        let lag_len = realtime.len() - delta_t.min(realtime.len());
        let lagged = realtime[..lag_len].to_vec();
        users.push(UserSplit {
            user: UserId(uid as u32),
            historical: lagged.clone(),
            realtime,
            lagged,
            valid_target: seq[n - 2],
            test_target: seq[n - 1],
        });
    }
    if users.is_empty() {
        return Err(Error::EmptySplit {
            dropped,
            min_len,
        });
    }
    let max_item = users
        .iter()
        .flat_map(|u| u.realtime.iter().chain([&u.valid_target, &u.test_target]))
        .map(|i| i.index() + 1)
        .max()
        .unwrap_or(0);
    Ok(DatasetSplits {
        n_items: n_items.max(max_item),
        delta_t,
        dropped_users: dropped,
        users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(user: u32, items: &[u32]) -> Vec<Interaction> {
        items
            .iter()
            .enumerate()
            .map(|(i, &it)| Interaction::click(UserId(user), ItemId(it), i as u32))
            .collect()
    }

    #[test]
    fn definition_unrolled() {
        // a..f = 0..5
        let s = build_splits(&seq(0, &[0, 1, 2, 3, 4, 5]), 6, 2).unwrap();
        let u = &s.users[0];
        assert_eq!(u.test_target, ItemId(5));
        assert_eq!(u.valid_target, ItemId(4));
        assert_eq!(u.realtime, vec![ItemId(0), ItemId(1), ItemId(2), ItemId(3)]);
        assert_eq!(u.lagged, vec![ItemId(0), ItemId(1)]);
        s.check_invariants().unwrap();
    }

    #[test]
    fn zero_lag_identity() {
        let s = build_splits(&seq(0, &[0, 1, 2, 3, 4, 5]), 6, 0).unwrap();
        assert_eq!(s.users[0].lagged, s.users[0].realtime);
    }

    #[test]
    fn short_users_dropped_and_counted() {
        let mut all = seq(0, &[0, 1, 2, 3]);
        all.extend(seq(1, &[0, 1, 2, 3, 4]));
        let s = build_splits(&all, 5, 2).unwrap();
        assert_eq!(s.dropped_users, 1);
        assert_eq!(s.users.len(), 1);
        assert_eq!(s.users[0].user, UserId(1));
    }

    #[test]
    fn all_dropped_is_error() {
        let err = build_splits(&seq(0, &[0, 1]), 2, 2).unwrap_err();
        assert!(matches!(err, Error::EmptySplit { dropped: 1, .. }));
    }

    #[test]
    fn unknown_user_lookup() {
        let s = build_splits(&seq(3, &[0, 1, 2, 3, 4]), 5, 2).unwrap();
        assert!(s.user(UserId(3)).is_ok());
        assert!(matches!(s.user(UserId(0)), Err(Error::UnknownUser(_))));
    }

    #[test]
    fn round_trip_reassembles() {
        let items = [4, 2, 2, 0, 1, 3, 4];
        let s = build_splits(&seq(0, &items), 5, 2).unwrap();
        let expect: Vec<ItemId> = items.iter().map(|&i| ItemId(i)).collect();
        assert_eq!(s.users[0].full_sequence(), expect);
    }
}
