use serde::{Deserialize, Serialize};

use crate::digest::hash_json;
use crate::error::{Error, Result};

/// How a history window is summarized into one user vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Average of the history item embeddings.
    MeanPool,
    /// GRU over the history; the final hidden state is the user vector.
    GatedRecurrent,
    /// One attention head queried by the most recent item, with learned
    /// recency embeddings and a residual connection.
    SelfAttention,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 3] = [
        EncoderKind::MeanPool,
        EncoderKind::GatedRecurrent,
        EncoderKind::SelfAttention,
    ];
}

/// Training objective for sampled-negative training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Binary cross-entropy: positive labelled 1, each negative labelled 0.
    Bce,
    /// Pairwise `-ln sigmoid(s_pos - s_neg)` summed over negatives.
    Bpr,
    /// Cross-entropy of a softmax over the positive and its negatives.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    /// Adam with decoupled weight decay.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankerConfig {
    pub emb_dim: usize,
    pub encoder: EncoderKind,
    pub max_seq_len: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub neg_rate: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    /// Standard deviation of the initial item embeddings.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            emb_dim: 16,
            encoder: EncoderKind::GatedRecurrent,
            max_seq_len: 10,
            lr: 0.05,
            weight_decay: 1e-5,
            epochs: 10,
            neg_rate: 1,
            batch_size: 32,
            optimizer: OptimizerKind::Sgd,
            loss: LossKind::Bce,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("ranker: {m}")));
        if self.emb_dim == 0 {
            return bad("emb_dim must be >= 1");
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be finite and non-negative");
        }
        Ok(())
    }

    pub fn config_hash(&self) -> u64 {
        hash_json(self)
    }
}
