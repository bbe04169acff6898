//! Trainable sequential rankers.
//!
//! A [`Ranker`] encodes the last `max_seq_len` items of a history into a user
//! vector `z` and scores item `i` as `z . emb(i) + bias(i)`. Three encoders
//! are available (mean pooling, a GRU, and single-head attention), all with
//! hand-written reverse passes so that training needs no autodiff framework.

mod checkpoint;
mod config;
mod encoder;
pub(crate) mod params;
mod ranker;
mod train;

pub use checkpoint::{CheckpointInfo, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{EncoderKind, LossKind, OptimizerKind, RankerConfig};
pub use params::{Params, Tensor};
pub use ranker::{Ranker, ScoreVector};
pub use train::{train_independent, training_samples, EpochStats, TrainReport, TrainSample};

pub(crate) use train::{fit, PhaseTag};
