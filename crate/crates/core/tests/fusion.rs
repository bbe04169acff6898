mod common;

use dcrec::infer::{collaborative_infer, fuse, normalize, CandidateSlate, FusionConfig};
use dcrec::model::ScoreVector;
use dcrec::rng::{Rng, Stream};
use dcrec::types::ItemId;
use proptest::prelude::*;

fn slate_strategy() -> impl Strategy<Value = (Vec<u32>, Vec<f64>, Vec<f64>)> {
    (2usize..25).prop_flat_map(|n| {
        (
            Just((0..200u32).collect::<Vec<_>>()).prop_shuffle().prop_map(move |v| v[..n].to_vec()),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

fn sorted_slate(items: &[u32], init: &[f64]) -> CandidateSlate {
    let mut pairs: Vec<(ItemId, f64)> = items.iter().map(|&i| ItemId(i)).zip(init.iter().copied()).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    CandidateSlate::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect()).unwrap()
}

proptest! {
    #[test]
    fn raising_rerank_score_never_demotes((items, init, rerank) in slate_strategy(), pick in 0usize..25, bump in 0.0f64..3.0, alpha in 0.0f64..0.999) {
        let slate = sorted_slate(&items, &init);
        let j = pick % slate.len();
        let cfg = FusionConfig::with_alpha(alpha);
        let before = fuse(&slate, &ScoreVector::new(rerank.clone()), &cfg).unwrap();
        let mut raised = rerank.clone();
        raised[j] += bump;
        let after = fuse(&slate, &ScoreVector::new(raised), &cfg).unwrap();
        let q = slate.items()[j];
        let pos = |o: &[ItemId]| o.iter().position(|&x| x == q).unwrap();
        prop_assert!(pos(&after.final_order) <= pos(&before.final_order));
    }

    #[test]
    fn final_order_is_a_permutation((items, init, rerank) in slate_strategy(), alpha in 0.0f64..=1.0) {
        let slate = sorted_slate(&items, &init);
        let f = fuse(&slate, &ScoreVector::new(rerank), &FusionConfig::with_alpha(alpha)).unwrap();
        let mut a = f.final_order.clone();
        let mut b = slate.items().to_vec();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn normalized_scores_span_unit_interval(v in prop::collection::vec(-1e3f64..1e3, 1..30)) {
        let n = normalize(&ScoreVector::new(v.clone())).unwrap();
        let (lo, hi) = n.as_slice().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        if v.iter().all(|&x| x == v[0]) {
            prop_assert!(n.as_slice().iter().all(|&x| x == 0.5));
        } else {
            prop_assert_eq!((lo, hi), (0.0, 1.0));
        }
    }
}

#[test]
fn filter_floor_drops_exactly_items_weak_on_both_sides() {
    let mut rng = Rng::new(5).substream(Stream::Shuffle, 0);
    let floor = 0.3;
    for _ in 0..200 {
        let n = 2 + rng.below(12);
        let items: Vec<u32> = (0..n as u32).collect();
        let init: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
        let rerank: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
        let slate = sorted_slate(&items, &init);
        let cfg = FusionConfig {
            alpha: 0.5,
            filter_floor: Some(floor),
        };
        // Min-max scaling puts a 1.0 on each side, so something survives.
        let f = fuse(&slate, &ScoreVector::new(rerank), &cfg).unwrap();
        for (j, q) in f.items.iter().enumerate() {
            let strong = f.norm_init[j] >= floor || f.norm_rerank[j] >= floor;
            assert_eq!(f.final_order.contains(q), strong, "item {q}");
        }
    }
}

#[test]
fn self_fusion_keeps_slate_order() {
    let fx = common::fixture(3);
    for &u in fx.groups.test.iter().take(30) {
        let lagged = &fx.splits.user(u).unwrap().lagged;
        let slate = fx.cloud.recall_topk(lagged, 15).unwrap();
        let own = fx.cloud.score_items(lagged, slate.items()).unwrap();
        for alpha in [0.0, 0.3, 0.7, 1.0] {
            let f = fuse(&slate, &own, &FusionConfig::with_alpha(alpha)).unwrap();
            assert_eq!(f.final_order, slate.init_ranking());
        }
    }
}

#[test]
fn collaborative_infer_ranks_the_lagged_slate() {
    let fx = common::fixture(4);
    let u = fx.groups.test[0];
    let lagged = &fx.splits.user(u).unwrap().lagged;
    let f = collaborative_infer(&fx.cloud, &fx.device, u, &fx.splits, 15, &FusionConfig::with_alpha(1.0)).unwrap();
    assert_eq!(f.final_order, fx.cloud.recall_topk(lagged, 15).unwrap().init_ranking());
}
