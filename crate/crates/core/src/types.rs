//! Identifier spaces and the interaction records everything else consumes.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense item id, `0..n_items`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

/// Dense user id, `0..n_users`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl ItemId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl UserId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

/// One observed (or sampled) user-item event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    /// Position in the user's lifetime sequence, 0-based and contiguous.
    pub seq_index: u32,
    /// 1 for an observed click, 0 for a sampled negative.
    pub label: u8,
}

impl Interaction {
    pub fn click(user: UserId, item: ItemId, seq_index: u32) -> Self {
        Self {
            user,
            item,
            seq_index,
            label: 1,
        }
    }
}

/// A user's most recent `max_len` items, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user: UserId,
    items: Vec<ItemId>,
    max_len: usize,
}

impl UserHistory {
    /// Keeps the last `max_len` entries of a chronological item list.
    pub fn new(user: UserId, items: &[ItemId], max_len: usize) -> Self {
        let start = items.len().saturating_sub(max_len);
        Self {
            user,
            items: items[start..].to_vec(),
            max_len,
        }
    }

    pub fn empty(user: UserId, max_len: usize) -> Self {
        Self {
            user,
            items: Vec::new(),
            max_len,
        }
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Bijection between raw ids seen at ingestion and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, UserId>,
    item_index: HashMap<String, ItemId>,
}

impl Catalog {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn item_id(&self, raw: &str) -> Option<ItemId> {
        self.item_index.get(raw).copied()
    }

    pub fn user_id(&self, raw: &str) -> Option<UserId> {
        self.user_index.get(raw).copied()
    }

    pub fn raw_item(&self, id: ItemId) -> Option<&str> {
        self.items.get(id.index()).map(String::as_str)
    }

    pub fn raw_user(&self, id: UserId) -> Option<&str> {
        self.users.get(id.index()).map(String::as_str)
    }

    fn intern_user(&mut self, raw: &str) -> UserId {
        if let Some(&id) = self.user_index.get(raw) {
            return id;
        }
        let id = UserId(self.users.len() as u32);
        self.users.push(raw.to_owned());
        self.user_index.insert(raw.to_owned(), id);
        id
    }

    fn intern_item(&mut self, raw: &str) -> ItemId {
        if let Some(&id) = self.item_index.get(raw) {
            return id;
        }
        let id = ItemId(self.items.len() as u32);
        self.items.push(raw.to_owned());
        self.item_index.insert(raw.to_owned(), id);
        id
    }
}

/// A raw event at the ingestion boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

impl RawEvent {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: i64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            timestamp,
        }
    }
}

/// Assigns dense ids and per-user sequence positions.
///
/// Users are numbered in order of first appearance in the input. Each user's
/// events are ordered by timestamp (ties keep input order), and items are
/// numbered in order of first appearance along that user-major, chronological
/// traversal. The output is sorted by `(user, seq_index)`, so feeding its raw
/// form back in reproduces it exactly.
pub fn remap_ids(raw_events: &[RawEvent]) -> Result<(Catalog, Vec<Interaction>)> {
    if raw_events.is_empty() {
        return Err(Error::EmptyInput("no events to remap"));
    }

    let mut user_order: Vec<&str> = Vec::new();
    let mut per_user: HashMap<&str, Vec<(i64, usize)>> = HashMap::new();
    for (idx, ev) in raw_events.iter().enumerate() {
        let slot = per_user.entry(ev.user.as_str()).or_insert_with(|| {
            user_order.push(ev.user.as_str());
            Vec::new()
        });
        slot.push((ev.timestamp, idx));
    }

    let mut catalog = Catalog::default();
    let mut out = Vec::with_capacity(raw_events.len());
    for raw_user in user_order {
        let events = per_user.get_mut(raw_user).expect("user was indexed");
        events.sort_by_key(|&(ts, idx)| (ts, idx));
        let mut seen_at: HashSet<(i64, &str)> = HashSet::new();
        for &(ts, idx) in events.iter() {
            let ev = &raw_events[idx];
            if !seen_at.insert((ts, ev.item.as_str())) {
                return Err(Error::DuplicateEvent {
                    user: ev.user.clone(),
                    item: ev.item.clone(),
                    timestamp: ts,
                });
            }
        }

        let user = catalog.intern_user(raw_user);
        for (pos, &(_, idx)) in events.iter().enumerate() {
            let item = catalog.intern_item(&raw_events[idx].item);
            out.push(Interaction::click(user, item, pos as u32));
        }
    }
    Ok((catalog, out))
}

/// Groups interactions (sorted or not) into per-user chronological item lists,
/// indexed by dense user id.
pub fn sequences_by_user(interactions: &[Interaction]) -> Vec<Vec<ItemId>> {
    let n_users = interactions
        .iter()
        .map(|i| i.user.index() + 1)
        .max()
        .unwrap_or(0);
    let mut rows: Vec<Vec<(u32, ItemId)>> = vec![Vec::new(); n_users];
    for it in interactions.iter().filter(|i| i.label == 1) {
        rows[it.user.index()].push((it.seq_index, it.item));
    }
    rows.into_iter()
        .map(|mut r| {
            r.sort_by_key(|&(s, _)| s);
            r.into_iter().map(|(_, item)| item).collect()
        })
        .collect()
}
