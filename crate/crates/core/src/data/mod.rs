//! Interaction logs, leave-one-out splits with a lagged cloud view, negative
//! sampling, and the synthetic drift generator.

mod drift;
mod io;
mod negative;
mod splits;

pub use drift::{generate_drift, generate_drift_with_truth, DriftSpec, DriftTruth};
pub use io::{
    parse_hash, read_event_log, read_snapshot, write_event_log, write_snapshot, SnapshotHeader,
    SNAPSHOT_FORMAT, SNAPSHOT_VERSION,
};
pub use negative::NegativeSampler;
pub use splits::{build_splits, min_sequence_len, DatasetSplits, UserSplit, DEFAULT_DELTA_T};
