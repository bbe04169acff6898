mod common;

use dcrec::collab::{augment, retrain_adaptive, train_cooperative, CollabConfig, DevicePipeline, Phase};
use dcrec::data::NegativeSampler;
use dcrec::model::{EncoderKind, Ranker, RankerConfig};
use dcrec::rng::{Rng, Stream};
use dcrec::simeval::{finish_device, pretrain_device, train_cloud, TrainingArm};
use dcrec::types::{ItemId, UserId};
use dcrec::Error;

fn with_embeddings(rows: &[Vec<f64>]) -> Ranker {
    let cfg = RankerConfig {
        emb_dim: rows[0].len(),
        encoder: EncoderKind::MeanPool,
        ..RankerConfig::default()
    };
    let mut r = Ranker::new(&cfg, rows.len()).unwrap();
    let emb = r.params_mut().tensors.iter_mut().find(|t| t.name == "item_emb").unwrap();
    for (i, row) in rows.iter().enumerate() {
        emb.row_mut(i).copy_from_slice(row);
    }
    r
}

/// All-pairs cosine top-k, written independently of the library.
fn oracle_neighbors(rows: &[Vec<f64>], item: usize, k: usize) -> Vec<usize> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sims: Vec<(f64, usize)> = (0..rows.len())
        .filter(|&j| j != item)
        .map(|j| {
            let d: f64 = rows[item].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            (d / (norm(&rows[item]) * norm(&rows[j])), j)
        })
        .collect();
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    sims.into_iter().take(k).map(|s| s.1).collect()
}

#[test]
fn augmentation_matches_exhaustive_cosine_oracle() {
    let mut rng = Rng::new(8).substream(Stream::Init, 0);
    for trial in 0..20 {
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.unit() * 2.0 - 1.0).collect()).collect();
        let cloud = with_embeddings(&rows);
        let history = [ItemId(trial % 20)];
        let slate = cloud.recall_topk(&history, 4).unwrap();
        let aug = augment(&slate, &cloud, 2).unwrap();
        let base: Vec<usize> = slate.items().iter().map(|i| i.index()).collect();
        let mut want: Vec<usize> = base
            .iter()
            .flat_map(|&b| oracle_neighbors(&rows, b, 2))
            .filter(|j| !base.contains(j))
            .collect();
        want.sort();
        want.dedup();
        let got: Vec<usize> = aug.extra.iter().map(|i| i.index()).collect();
        assert_eq!(got, want, "trial {trial}");
    }
}

#[test]
fn duplicate_embedding_added_once() {
    let rows = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0],
    ];
    let cloud = with_embeddings(&rows);
    let slate = dcrec::infer::CandidateSlate::new(vec![ItemId(0), ItemId(1), ItemId(2)], vec![3.0, 2.0, 1.0]).unwrap();
    let aug = augment(&slate, &cloud, 1).unwrap();
    assert_eq!(aug.extra, vec![ItemId(3)]);
    assert!(augment(&slate, &cloud, 0).unwrap().extra.is_empty());
    assert!(matches!(augment(&slate, &cloud, 4), Err(Error::InvalidAugmentation { .. })));
}

#[test]
fn cooperative_training_freezes_the_cloud() {
    let fx = common::fixture(5);
    let before = fx.cloud.checksum();
    let mut device = fx.device.clone();
    let rep = train_cooperative(&mut device, &fx.cloud, &fx.splits.historical(), &fx.cfg.collab).unwrap();
    assert_eq!(fx.cloud.checksum(), before);
    assert_ne!(device.checksum(), fx.device.checksum());
    assert_eq!(rep.epochs.len(), fx.cfg.collab.coop_epochs);
}

#[test]
fn positive_only_slate_is_skipped_and_counted() {
    // The cloud puts item 0 first for everyone and every target is item 0,
    // so a one-item slate without augmentation leaves no negatives.
    let mut cloud = with_embeddings(&vec![vec![0.0; 4]; 8]);
    let bias = cloud.params_mut().tensors.iter_mut().find(|t| t.name == "item_bias").unwrap();
    bias.data[0] = 10.0;
    let seqs: Vec<Vec<ItemId>> = (0..5u32).map(|u| vec![ItemId(1 + u), ItemId(0)]).collect();
    let data: Vec<(UserId, &[ItemId])> = seqs.iter().enumerate().map(|(u, s)| (UserId(u as u32), s.as_slice())).collect();
    let cfg = CollabConfig {
        k_aug: 0,
        slate_len: 1,
        coop_epochs: 2,
        ..CollabConfig::default()
    };
    let mut device = Ranker::new(&RankerConfig { emb_dim: 4, ..RankerConfig::default() }, 8).unwrap();
    let before = device.checksum();
    let rep = train_cooperative(&mut device, &cloud, &data, &cfg).unwrap();
    assert_eq!(rep.skipped, 2 * seqs.len());
    assert_eq!(device.checksum(), before);
}

#[test]
fn phases_run_in_order_only() {
    let fx = common::fixture(6);
    let hist = fx.splits.historical();
    let rt = fx.splits.realtime();
    let sampler = NegativeSampler::new(fx.splits.n_items, hist.iter().copied(), 1);
    let fresh = || Ranker::new(&fx.cfg.device, fx.splits.n_items).unwrap();

    let mut p = DevicePipeline::new(fresh());
    assert!(matches!(p.cooperative(&fx.cloud, &hist, &fx.cfg.collab), Err(Error::PhaseOrder { .. })));
    assert!(matches!(p.adaptive(&rt, &fx.cfg.collab), Err(Error::PhaseOrder { .. })));
    p.independent(&hist, &sampler).unwrap();
    assert!(matches!(p.independent(&hist, &sampler), Err(Error::PhaseOrder { .. })));
    p.adaptive(&rt, &fx.cfg.collab).unwrap();
    let err = p.cooperative(&fx.cloud, &hist, &fx.cfg.collab).unwrap_err();
    assert!(matches!(err, Error::PhaseOrder { current: "adaptive", attempted: "cooperative" }), "{err}");
    assert_eq!(p.phase(), Phase::Adaptive);

    let mut q = DevicePipeline::resume(fx.device.clone(), Phase::Independent);
    q.cooperative(&fx.cloud, &hist, &fx.cfg.collab).unwrap();
    q.adaptive(&rt, &fx.cfg.collab).unwrap();
    assert_eq!(q.reports().len(), 2);
}

#[test]
fn adaptive_without_data_warns_and_keeps_device() {
    let fx = common::fixture(7);
    let mut device = fx.device.clone();
    let rep = retrain_adaptive(&mut device, &[], &fx.cfg.collab).unwrap();
    assert!(rep.warning.is_some());
    assert_eq!(rep.steps, 0);
    assert_eq!(device.checksum(), fx.device.checksum());
}

#[test]
fn training_is_reproducible_to_the_byte() {
    let cfg = common::small_config();
    let splits = dcrec::simeval::prepare_splits(&cfg, 2, None).unwrap();
    let run = || {
        let (cloud, _) = train_cloud(&cfg, &splits, 2).unwrap();
        let (pre, _) = pretrain_device(&cfg, &splits, 2).unwrap();
        let (device, _) = finish_device(&pre, &cloud, &splits, &cfg.collab, TrainingArm { cooperative: true, adaptive: true }).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        cloud.save(&mut a, 1).unwrap();
        device.save(&mut b, 1).unwrap();
        (a, b)
    };
    assert_eq!(run(), run());

    let (bytes, _) = run();
    let (loaded, info) = Ranker::load(bytes.as_slice(), None).unwrap();
    assert_eq!(info.provenance, 1);
    let mut again = Vec::new();
    loaded.save(&mut again, 1).unwrap();
    assert_eq!(again, bytes);
}
