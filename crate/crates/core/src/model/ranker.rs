use rand_distr::{Distribution, Normal};

use super::config::{LossKind, RankerConfig};
use super::encoder::{encode, encode_backward, init_encoder, ITEM_BIAS, ITEM_EMB};
use super::params::{axpy, dot, sigmoid, softplus, Params, Tensor};
use crate::digest::hash_bytes;
use crate::error::{Error, Result};
use crate::infer::CandidateSlate;
use crate::rng::{Rng, Stream};
use crate::types::{ItemId, UserHistory};

/// Per-item utilities for one scoring context, aligned with the scored items.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Self {
        Self(scores)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for ScoreVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for ScoreVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A sequential ranker: `score(i) = encode(history) . emb(i) + bias(i)`.
///
/// The same type plays both roles in the simulator: a small on-device model
/// and a wider cloud model that stands in for the large generative ranker.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranker {
    cfg: RankerConfig,
    n_items: usize,
    params: Params,
}

impl Ranker {
    pub fn new(cfg: &RankerConfig, n_items: usize) -> Result<Self> {
        cfg.validate()?;
        if n_items == 0 {
            return Err(Error::InvalidConfig("ranker needs at least one item".into()));
        }
        let mut rng = Rng::new(cfg.seed).substream(Stream::Init, 0);
        let d = cfg.emb_dim;
        let mut emb = Tensor::zeros("item_emb", n_items, d);
        let normal = Normal::new(0.0, cfg.init_scale).expect("validated scale");
        emb.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        let mut tensors = vec![emb, Tensor::zeros("item_bias", 1, n_items)];
        tensors.extend(init_encoder(cfg.encoder, d, cfg.max_seq_len, cfg.init_scale, &mut rng));
        let mut params = Params { tensors };
        params.round_to_f32();
        Ok(Self {
            cfg: cfg.clone(),
            n_items,
            params,
        })
    }

    pub(crate) fn from_parts(cfg: RankerConfig, n_items: usize, params: Params) -> Self {
        Self {
            cfg,
            n_items,
            params,
        }
    }

    pub fn config(&self) -> &RankerConfig {
        &self.cfg
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.cfg.emb_dim
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Direct parameter access, for optimizers and finite-difference checks.
    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn item_embedding(&self, item: ItemId) -> &[f64] {
        self.params.tensors[ITEM_EMB].row(item.index())
    }

    pub fn item_bias(&self, item: ItemId) -> f64 {
        self.params.tensors[ITEM_BIAS].data[item.index()]
    }

    /// Digest of the parameter bits; equal digests mean identical models.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for v in self.params.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        hash_bytes(&bytes)
    }

    fn check_item(&self, item: ItemId) -> Result<()> {
        if item.index() < self.n_items {
            Ok(())
        } else {
            Err(Error::UnknownItem(item))
        }
    }

    fn window<'a>(&self, history: &'a [ItemId]) -> Result<&'a [ItemId]> {
        let start = history.len().saturating_sub(self.cfg.max_seq_len);
        let w = &history[start..];
        for &it in w {
            self.check_item(it)?;
        }
        Ok(w)
    }

    /// User vector for the last `max_seq_len` items of `history`.
    pub fn encode(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        let w = self.window(history)?;
        Ok(encode(self.cfg.encoder, &self.params, self.dim(), w).0)
    }

    fn score_with(&self, z: &[f64], item: ItemId) -> f64 {
        dot(z, self.item_embedding(item)) + self.item_bias(item)
    }

    pub fn score(&self, history: &UserHistory, items: &[ItemId]) -> Result<ScoreVector> {
        self.score_items(history.items(), items)
    }

    pub fn score_items(&self, history: &[ItemId], items: &[ItemId]) -> Result<ScoreVector> {
        for &it in items {
            self.check_item(it)?;
        }
        let z = self.encode(history)?;
        Ok(ScoreVector(items.iter().map(|&it| self.score_with(&z, it)).collect()))
    }

    /// Scores for every catalog item, indexed by item id.
    pub fn score_all(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        let z = self.encode(history)?;
        Ok((0..self.n_items as u32)
            .map(|i| self.score_with(&z, ItemId(i)))
            .collect())
    }

    /// The `k` best catalog items, by descending score then ascending id.
    pub fn recall_topk(&self, history: &[ItemId], k: usize) -> Result<CandidateSlate> {
        if k == 0 {
            return Err(Error::EmptySlate);
        }
        if k > self.n_items {
            return Err(Error::SlateTooLong {
                requested: k,
                n_items: self.n_items,
            });
        }
        let scores = self.score_all(history)?;
        let mut order: Vec<u32> = (0..self.n_items as u32).collect();
        let cmp = |a: &u32, b: &u32| {
            scores[*b as usize]
                .total_cmp(&scores[*a as usize])
                .then(a.cmp(b))
        };
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(cmp);
        let items: Vec<ItemId> = order.iter().map(|&i| ItemId(i)).collect();
        let init: Vec<f64> = order.iter().map(|&i| scores[i as usize]).collect();
        Ok(CandidateSlate::from_sorted(items, init))
    }

    /// Loss of one training example.
    pub fn sample_loss(
        &self,
        history: &[ItemId],
        positive: ItemId,
        negatives: &[ItemId],
        loss: LossKind,
    ) -> Result<f64> {
        let w = self.window(history)?;
        let z = encode(self.cfg.encoder, &self.params, self.dim(), w).0;
        let (l, _) = self.loss_and_score_grads(&z, positive, negatives, loss)?;
        Ok(l)
    }

    /// Loss of one training example; adds its parameter gradient into `grads`.
    pub fn sample_loss_grad(
        &self,
        history: &[ItemId],
        positive: ItemId,
        negatives: &[ItemId],
        loss: LossKind,
        grads: &mut Params,
    ) -> Result<f64> {
        let w = self.window(history)?;
        let d = self.dim();
        let (z, cache) = encode(self.cfg.encoder, &self.params, d, w);
        let (l, ds) = self.loss_and_score_grads(&z, positive, negatives, loss)?;

        let mut dz = vec![0.0; d];
        for (&it, &g) in std::iter::once(&positive).chain(negatives).zip(&ds) {
            if g == 0.0 {
                continue;
            }
            axpy(g, self.item_embedding(it), &mut dz);
            axpy(g, &z, grads.tensors[ITEM_EMB].row_mut(it.index()));
            grads.tensors[ITEM_BIAS].data[it.index()] += g;
        }
        encode_backward(&self.params, d, w, &cache, &dz, grads);
        Ok(l)
    }

    /// Loss and `dL/dscore` for `[positive, negatives...]`.
    fn loss_and_score_grads(
        &self,
        z: &[f64],
        positive: ItemId,
        negatives: &[ItemId],
        loss: LossKind,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_item(positive)?;
        for &n in negatives {
            self.check_item(n)?;
        }
        let s_pos = self.score_with(z, positive);
        let s_neg: Vec<f64> = negatives.iter().map(|&n| self.score_with(z, n)).collect();
        let mut grads = Vec::with_capacity(1 + negatives.len());
        let l = match loss {
            LossKind::Bce => {
                grads.push(sigmoid(s_pos) - 1.0);
                grads.extend(s_neg.iter().map(|&s| sigmoid(s)));
                softplus(-s_pos) + s_neg.iter().map(|&s| softplus(s)).sum::<f64>()
            }
            LossKind::Bpr => {
                let mut gp = 0.0;
                let mut total = 0.0;
                let mut gn = Vec::with_capacity(s_neg.len());
                for &s in &s_neg {
                    let diff = s_pos - s;
                    total += softplus(-diff);
                    let g = sigmoid(diff) - 1.0;
                    gp += g;
                    gn.push(-g);
                }
                grads.push(gp);
                grads.extend(gn);
                total
            }
            LossKind::Softmax => {
                let m = s_neg.iter().copied().fold(s_pos, f64::max);
                let exps: Vec<f64> = std::iter::once(s_pos)
                    .chain(s_neg.iter().copied())
                    .map(|s| (s - m).exp())
                    .collect();
                let sum: f64 = exps.iter().sum();
                grads.extend(exps.iter().map(|e| e / sum));
                grads[0] -= 1.0;
                m + sum.ln() - s_pos
            }
        };
        Ok((l, grads))
    }
}
