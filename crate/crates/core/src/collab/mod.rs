//! Collaborative training of the device ranker.
//!
//! Three phases run in order. Independent training fits the device on the
//! historical data with sampled negatives. Cooperative training teaches it to
//! rerank the frozen cloud ranker's slates, widened with embedding-space
//! neighbours. Adaptive retraining fine-tunes it on the real-time histories
//! that only the device sees.

mod augment;
mod phases;

pub use augment::{augment, cosine, AugmentedSlate, NeighborTable};
pub use phases::{retrain_adaptive, train_cooperative, CollabConfig, DevicePipeline, Phase};
