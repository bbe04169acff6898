use std::path::PathBuf;

use crate::types::{ItemId, UserId};

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("duplicate event: user {user:?} item {item:?} at timestamp {timestamp}")]
    DuplicateEvent {
        user: String,
        item: String,
        timestamp: i64,
    },

    #[error("malformed event log line {line}: {reason}")]
    MalformedEvent { line: usize, reason: String },

    #[error("all {dropped} users were dropped by the split (need at least {min_len} interactions each)")]
    EmptySplit { dropped: usize, min_len: usize },

    #[error("cannot draw {requested} negatives for user {user}: only {available} non-positive items")]
    InsufficientNegatives {
        user: UserId,
        requested: usize,
        available: usize,
    },

    #[error("invalid drift spec: {0}")]
    InvalidDriftSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown item id {0}")]
    UnknownItem(ItemId),

    #[error("unknown user id {0}")]
    UnknownUser(UserId),

    #[error("requested an empty slate (k = 0)")]
    EmptySlate,

    #[error("requested {requested} candidates from a catalog of {n_items} items")]
    SlateTooLong { requested: usize, n_items: usize },

    #[error("training diverged: non-finite loss at step {step} (epoch {epoch})")]
    Divergence { epoch: usize, step: usize },

    #[error("training data is empty")]
    EmptyTrainingData,

    #[error("invalid augmentation: k_aug = {k_aug} with {n_items} items")]
    InvalidAugmentation { k_aug: usize, n_items: usize },

    #[error("collaborative phase {attempted} cannot run after {current}")]
    PhaseOrder {
        current: &'static str,
        attempted: &'static str,
    },

    #[error("cannot normalize an empty score vector")]
    EmptyScores,

    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),

    #[error("invalid slate: {0}")]
    InvalidSlate(String),

    #[error("score vector of length {scores} does not align with slate of length {items}")]
    Alignment { items: usize, scores: usize },

    #[error("every slate item was removed by the filter floor {floor}")]
    EmptyAfterFilter { floor: f64 },

    #[error("rankings are not permutations of the same item set")]
    NotAPermutation,

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("inconsistency policy has no calibrated threshold")]
    MissingThreshold,

    #[error("bridge protocol error at line {line}: {reason}")]
    Protocol { line: usize, reason: String },

    #[error("bridge timed out waiting for a reply")]
    BridgeTimeout,

    #[error("remote slate provider: {0}")]
    Remote(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("config hash mismatch in {artifact}: expected {expected:016x}, found {found:016x}")]
    HashMismatch {
        artifact: String,
        expected: u64,
        found: u64,
    },

    #[error("bad snapshot: {0}")]
    Snapshot(String),

    #[error("missing artifact {artifact}: run `dcrec {producer}` first")]
    MissingArtifact {
        artifact: String,
        producer: &'static str,
    },

    #[error("path does not exist: {}", .0.display())]
    MissingPath(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
