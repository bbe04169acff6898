//! Synthetic interaction logs with a per-user interest switch.
//!
//! Every user has two interest clusters. Before the switch index they click
//! mostly in the first, afterwards mostly in the second; with probability
//! `noise` a click lands in the currently inactive cluster instead. Within a
//! cluster items are drawn with a Zipf-like popularity profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::types::{Interaction, ItemId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub seq_len: usize,
    pub n_interest_clusters: usize,
    /// Fraction of the sequence after which the active cluster switches.
    pub drift_point: f64,
    /// Probability that a click falls in the inactive cluster.
    pub noise: f64,
    pub seed: u64,
    /// Per-user uniform offset in `-jitter..=jitter` added to the switch index.
    #[serde(default)]
    pub drift_jitter: usize,
    /// Zipf exponent of item popularity inside a cluster; 0 is uniform.
    #[serde(default)]
    pub popularity_skew: f64,
    /// Probability that a click staying in the previous click's cluster
    /// moves to that item's fixed successor instead of a popularity draw.
    #[serde(default)]
    pub transition_prob: f64,
    /// Items carry a style, their offset inside the cluster modulo
    /// `n_styles`. Each user has one style, stable across the interest
    /// switch. 0 or 1 disables styles.
    #[serde(default)]
    pub n_styles: usize,
    /// Probability that a popularity draw is restricted to the user's style.
    #[serde(default)]
    pub style_affinity: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            n_users: 400,
            n_items: 120,
            seq_len: 20,
            n_interest_clusters: 12,
            drift_point: 0.8,
            noise: 0.1,
            seed: 0,
            drift_jitter: 3,
            popularity_skew: 1.0,
            transition_prob: 0.0,
            n_styles: 0,
            style_affinity: 0.0,
        }
    }
}

/// Ground truth behind a generated log, for tests and diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriftTruth {
    /// `(before, after)` cluster per user.
    pub clusters: Vec<(usize, usize)>,
    /// First sequence position drawn from the second cluster.
    pub switch_at: Vec<usize>,
    /// Each user's style, when styles are enabled.
    pub styles: Vec<Option<usize>>,
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDriftSpec(m));
        if !(self.drift_point > 0.0 && self.drift_point < 1.0) {
            return bad(format!("drift_point {} not in (0, 1)", self.drift_point));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad(format!("noise {} not in [0, 0.5)", self.noise));
        }
        if self.n_interest_clusters < 2 {
            return bad("need at least two interest clusters".into());
        }
        if self.n_items < self.n_interest_clusters {
            return bad(format!(
                "n_items {} < n_interest_clusters {}",
                self.n_items, self.n_interest_clusters
            ));
        }
        if self.seq_len < 2 {
            return bad("seq_len must be at least 2".into());
        }
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if !(self.popularity_skew >= 0.0 && self.popularity_skew.is_finite()) {
            return bad("popularity_skew must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.style_affinity) {
            return bad(format!("style_affinity {} not in [0, 1]", self.style_affinity));
        }
        if self.n_styles > 1 {
            let smallest = self.n_items / self.n_interest_clusters;
            if smallest < self.n_styles {
                return bad(format!(
                    "clusters of {smallest} items cannot hold {} styles",
                    self.n_styles
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.transition_prob) {
            return bad(format!("transition_prob {} not in [0, 1]", self.transition_prob));
        }
        Ok(())
    }

    /// Contiguous item blocks; block sizes differ by at most one.
    pub fn cluster_of(&self, item: ItemId) -> usize {
        item.index() * self.n_interest_clusters / self.n_items
    }

    pub fn cluster_items(&self, cluster: usize) -> std::ops::Range<u32> {
        let c = self.n_interest_clusters;
        let lo = (cluster * self.n_items).div_ceil(c);
        let hi = ((cluster + 1) * self.n_items).div_ceil(c);
        lo as u32..hi as u32
    }

    /// Offset of the item inside its cluster, modulo `n_styles`.
    pub fn style_of(&self, item: ItemId) -> Option<usize> {
        (self.n_styles > 1).then(|| {
            let start = self.cluster_items(self.cluster_of(item)).start as usize;
            (item.index() - start) % self.n_styles
        })
    }

    fn base_switch(&self) -> usize {
        ((self.drift_point * self.seq_len as f64).floor() as usize).clamp(1, self.seq_len - 1)
    }
}

pub fn generate_drift(spec: &DriftSpec) -> Result<Vec<Interaction>> {
    generate_drift_with_truth(spec).map(|(log, _)| log)
}

pub fn generate_drift_with_truth(spec: &DriftSpec) -> Result<(Vec<Interaction>, DriftTruth)> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let n_clusters = spec.n_interest_clusters;

    // Cumulative popularity weights per cluster, by rank inside the cluster.
    let cdfs: Vec<Vec<f64>> = (0..n_clusters)
        .map(|c| {
            let size = spec.cluster_items(c).len();
            let mut acc = 0.0;
            (0..size)
                .map(|r| {
                    acc += 1.0 / ((r + 1) as f64).powf(spec.popularity_skew);
                    acc
                })
                .collect()
        })
        .collect();
    let styled = spec.n_styles > 1;
    // Per (cluster, style): the cluster offsets of that style and their
    // cumulative popularity weights.
    let style_cdfs: Vec<Vec<(Vec<usize>, Vec<f64>)>> = if styled {
        (0..n_clusters)
            .map(|c| {
                let size = spec.cluster_items(c).len();
                (0..spec.n_styles)
                    .map(|st| {
                        let offsets: Vec<usize> = (st..size).step_by(spec.n_styles).collect();
                        let mut acc = 0.0;
                        let cdf = offsets
                            .iter()
                            .map(|&r| {
                                acc += 1.0 / ((r + 1) as f64).powf(spec.popularity_skew);
                                acc
                            })
                            .collect();
                        (offsets, cdf)
                    })
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    let pick = |cdf: &[f64], rng: &mut Rng| -> usize {
        let x = rng.unit() * cdf[cdf.len() - 1];
        cdf.partition_point(|&v| v <= x).min(cdf.len() - 1)
    };
    let draw = |cluster: usize, style: Option<usize>, rng: &mut Rng| -> ItemId {
        let start = spec.cluster_items(cluster).start;
        match style {
            Some(st) if rng.unit() < spec.style_affinity => {
                let (offsets, cdf) = &style_cdfs[cluster][st];
                ItemId(start + offsets[pick(cdf, rng)] as u32)
            }
            _ => ItemId(start + pick(&cdfs[cluster], rng) as u32),
        }
    };

    // Each cluster's items form a shuffled cycle; an item's successor is the
    // next one along it.
    let mut successor = vec![ItemId(0); spec.n_items];
    let mut cycle_rng = root.substream(Stream::Data, u64::MAX);
    for c in 0..n_clusters {
        let mut cycle: Vec<u32> = spec.cluster_items(c).collect();
        cycle_rng.shuffle(&mut cycle);
        for (j, &it) in cycle.iter().enumerate() {
            successor[it as usize] = ItemId(cycle[(j + 1) % cycle.len()]);
        }
    }

    let base = spec.base_switch();
    let mut log = Vec::with_capacity(spec.n_users * spec.seq_len);
    let mut truth = DriftTruth {
        clusters: Vec::with_capacity(spec.n_users),
        switch_at: Vec::with_capacity(spec.n_users),
        styles: Vec::with_capacity(spec.n_users),
    };
    for u in 0..spec.n_users {
        let mut rng = root.substream(Stream::Data, u as u64);
        let first = rng.below(n_clusters);
        let second = (first + 1 + rng.below(n_clusters - 1)) % n_clusters;
        let offset = rng.below(2 * spec.drift_jitter + 1) as isize - spec.drift_jitter as isize;
        let switch_at = (base as isize + offset).clamp(1, spec.seq_len as isize - 1) as usize;
        let style = styled.then(|| rng.below(spec.n_styles));
        let mut prev: Option<ItemId> = None;
        for t in 0..spec.seq_len {
            let (active, inactive) = if t < switch_at {
                (first, second)
            } else {
                (second, first)
            };
            let cluster = if rng.unit() < spec.noise {
                inactive
            } else {
                active
            };
            let item = match prev {
                Some(p)
                    if spec.transition_prob > 0.0
                        && spec.cluster_of(p) == cluster
                        && rng.unit() < spec.transition_prob =>
                {
                    successor[p.index()]
                }
                _ => draw(cluster, style, &mut rng),
            };
            prev = Some(item);
            log.push(Interaction::click(UserId(u as u32), item, t as u32));
        }
        truth.clusters.push((first, second));
        truth.switch_at.push(switch_at);
        truth.styles.push(style);
    }
    Ok((log, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> DriftSpec {
        DriftSpec {
            n_users: 20,
            n_items: 30,
            seq_len: 10,
            n_interest_clusters: 3,
            drift_point: 0.5,
            noise: 0.0,
            seed: 4,
            drift_jitter: 0,
            popularity_skew: 0.0,
            transition_prob: 0.0,
            n_styles: 0,
            style_affinity: 0.0,
        }
    }

    #[test]
    fn noiseless_halves() {
        let s = spec();
        let (log, truth) = generate_drift_with_truth(&s).unwrap();
        for u in 0..s.n_users {
            let (a, b) = truth.clusters[u];
            assert_ne!(a, b);
            let rows = &log[u * 10..(u + 1) * 10];
            for (t, it) in rows.iter().enumerate() {
                let want = if t < 5 { a } else { b };
                assert_eq!(s.cluster_of(it.item), want, "user {u} pos {t}");
            }
        }
    }

    #[test]
    fn clusters_partition_items() {
        let s = DriftSpec {
            n_items: 31,
            n_interest_clusters: 4,
            ..spec()
        };
        let mut covered = 0;
        for c in 0..4 {
            for i in s.cluster_items(c) {
                assert_eq!(s.cluster_of(ItemId(i)), c);
                covered += 1;
            }
        }
        assert_eq!(covered, 31);
    }

    #[test]
    fn invalid_specs() {
        let too_few_items = DriftSpec {
            n_items: 2,
            ..spec()
        };
        assert!(matches!(
            generate_drift(&too_few_items),
            Err(Error::InvalidDriftSpec(_))
        ));
        for (dp, noise) in [(0.0, 0.1), (1.0, 0.1), (0.5, 0.5), (0.5, -0.1)] {
            let s = DriftSpec {
                drift_point: dp,
                noise,
                ..spec()
            };
            assert!(generate_drift(&s).is_err(), "dp={dp} noise={noise}");
        }
    }

    #[test]
    fn certain_transitions_follow_one_cycle() {
        let s = DriftSpec {
            transition_prob: 1.0,
            ..spec()
        };
        let log = generate_drift(&s).unwrap();
        // Within a cluster run, every click determines the next one.
        let mut next = std::collections::HashMap::new();
        for w in log.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.user == b.user && s.cluster_of(a.item) == s.cluster_of(b.item) {
                assert_eq!(*next.entry(a.item).or_insert(b.item), b.item);
                assert_ne!(a.item, b.item);
            }
        }
        assert!(!next.is_empty());
    }

    #[test]
    fn full_affinity_keeps_users_in_style() {
        let s = DriftSpec {
            n_styles: 3,
            style_affinity: 1.0,
            noise: 0.2,
            ..spec()
        };
        let (log, truth) = generate_drift_with_truth(&s).unwrap();
        for ev in &log {
            assert_eq!(s.style_of(ev.item), truth.styles[ev.user.index()]);
        }
    }

    #[test]
    fn same_seed_same_log() {
        let s = DriftSpec {
            noise: 0.2,
            drift_jitter: 2,
            ..spec()
        };
        assert_eq!(generate_drift(&s).unwrap(), generate_drift(&s).unwrap());
    }
}
