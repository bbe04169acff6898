//! Simulation of device-cloud inference over evaluation users, with request
//! accounting, ranking metrics, ablation suites and a bridge for external
//! slate providers.

pub mod bridge;
mod episode;
mod experiment;
mod metrics;
mod report;

pub use episode::{
    run_episode, run_episode_with, InferenceArm, SimConfig, UserOutcome, ID_BYTES, SCORE_BYTES,
};
pub use experiment::{
    calibration_scores, cohorts, finish_device, prepare_splits, pretrain_device, run_ablation,
    run_seed, standard_arms, train_cloud, ArmSpec, Cohorts, TrainingArm,
};
pub use metrics::{metric_hr, metric_ndcg, metric_precision, EvalCase, Metric};
pub use report::{mean_over_seeds, reports_csv, write_reports_jsonl, MetricValue, SimReport, CSV_HEADER};
