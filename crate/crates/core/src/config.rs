//! The run configuration: one TOML file drives data preparation, training,
//! calibration, evaluation and ablations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collab::CollabConfig;
use crate::data::{DriftSpec, DEFAULT_DELTA_T};
use crate::digest::{combine, hash_json};
use crate::error::{Error, Result};
use crate::infer::FusionConfig;
use crate::model::{EncoderKind, OptimizerKind, RankerConfig};
use crate::request::PolicyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Tab-separated `user, item, timestamp` log. Absent means the synthetic
    /// drift generator supplies the data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    /// Directory holding every artifact of the run.
    pub run_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            events: None,
            run_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Events the cloud's view lags behind the device.
    pub delta_t: usize,
    /// Share of users whose inconsistency scores calibrate the threshold.
    /// They are excluded from evaluation.
    pub calibration_fraction: f64,
    pub drift: DriftSpec,
}

/// The synthetic dataset the acceptance runs use. Users keep a stable style
/// that only a long history reveals while their interest cluster drifts
/// late in the sequence, so the real-time tail and the long-term profile
/// carry complementary signal.
pub fn bundled_drift() -> DriftSpec {
    DriftSpec {
        n_users: 600,
        n_items: 200,
        seq_len: 20,
        n_interest_clusters: 10,
        drift_point: 0.8,
        noise: 0.1,
        seed: 0,
        drift_jitter: 3,
        popularity_skew: 1.0,
        transition_prob: 0.0,
        n_styles: 8,
        style_affinity: 0.8,
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            delta_t: DEFAULT_DELTA_T,
            calibration_fraction: 0.2,
            drift: bundled_drift(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RequestConfig {
    pub policy: PolicyKind,
    pub budget: f64,
    pub seed: u64,
}

impl Default for RequestConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Inconsistency,
            budget: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    /// Slate length.
    pub k: usize,
    pub metrics_k: Vec<usize>,
    /// Seeds for multi-seed ablations.
    pub seeds: Vec<u64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            k: 50,
            metrics_k: vec![5, 10, 20],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub budgets: Vec<f64>,
    pub ks: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            budgets: vec![0.05, 0.1, 0.2, 0.4],
            ks: vec![20, 50],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed of the single-run commands (prepare, train, calibrate, eval).
    pub seed: u64,
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub cloud: RankerConfig,
    pub device: RankerConfig,
    pub collab: CollabConfig,
    pub fusion: FusionConfig,
    pub request: RequestConfig,
    pub sim: SimSettings,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            paths: PathsConfig::default(),
            data: DataConfig::default(),
            cloud: RankerConfig {
                emb_dim: 32,
                encoder: EncoderKind::MeanPool,
                max_seq_len: 3,
                optimizer: OptimizerKind::Adam,
                lr: 0.01,
                epochs: 15,
                neg_rate: 4,
                ..RankerConfig::default()
            },
            device: RankerConfig {
                emb_dim: 8,
                encoder: EncoderKind::GatedRecurrent,
                max_seq_len: 3,
                optimizer: OptimizerKind::Adam,
                lr: 0.01,
                ..RankerConfig::default()
            },
            collab: CollabConfig::default(),
            fusion: FusionConfig::with_alpha(0.3),
            request: RequestConfig::default(),
            sim: SimSettings::default(),
            ablation: AblationConfig::default(),
        }
    }
}

/// Pipeline stages, each with its own digest over the settings it reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prepare,
    Train,
    Calibrate,
    Eval,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates a config file; a configured events file must
    /// exist. Relative paths resolve against the current directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_owned()));
        }
        let cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn check_paths(&self) -> Result<()> {
        match &self.paths.events {
            Some(p) if !p.exists() => Err(Error::MissingPath(p.clone())),
            _ => Ok(()),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.events.is_none() {
            self.data.drift.validate()?;
        }
        if !(0.0..1.0).contains(&self.data.calibration_fraction) {
            return Err(Error::InvalidConfig(
                "data.calibration_fraction must be in [0, 1)".into(),
            ));
        }
        self.cloud.validate()?;
        self.device.validate()?;
        self.collab.validate()?;
        self.fusion.validate()?;
        if !(0.0..=1.0).contains(&self.request.budget) {
            return Err(Error::InvalidConfig("request.budget must be in [0, 1]".into()));
        }
        let mk = &self.sim.metrics_k;
        if mk.is_empty() || mk.windows(2).any(|w| w[0] >= w[1]) || mk[0] == 0 {
            return Err(Error::InvalidConfig(
                "sim.metrics_k must be positive and strictly ascending".into(),
            ));
        }
        let kmax = *mk.last().expect("non-empty");
        for &k in std::iter::once(&self.sim.k).chain(&self.ablation.ks) {
            if k < kmax {
                return Err(Error::InvalidConfig(format!(
                    "slate length {k} is shorter than the largest cutoff {kmax}"
                )));
            }
        }
        if self.sim.seeds.is_empty() {
            return Err(Error::InvalidConfig("sim.seeds must not be empty".into()));
        }
        if self.ablation.budgets.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::InvalidConfig("ablation budgets must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Digest of everything the given stage depends on, including the
    /// stages before it.
    pub fn stage_hash(&self, stage: Stage) -> u64 {
        let prepare = hash_json(&(self.seed, &self.paths.events, &self.data));
        if stage == Stage::Prepare {
            return prepare;
        }
        let train = combine(prepare, hash_json(&(&self.cloud, &self.device, &self.collab)));
        if stage == Stage::Train {
            return train;
        }
        let calibrate = combine(
            train,
            hash_json(&(&self.fusion, self.request.budget, self.sim.k)),
        );
        if stage == Stage::Calibrate {
            return calibrate;
        }
        combine(calibrate, hash_json(&(&self.request, &self.sim)))
    }
}
