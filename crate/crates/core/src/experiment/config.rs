use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{sha256_hex, snapshot_schedule};
use crate::data::DatasetSpec;
use crate::nn::{ModelConfig, TrainSchedule};
use crate::noise::{AugmentPolicy, SeveritySchedule};
use crate::prune::{IterativeSchedule, PruneMethod, Recovery};
use crate::{Error, Result};

/// The seven columns of the method comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodName {
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "finetune")]
    Finetune,
    #[serde(rename = "parp")]
    Parp,
    #[serde(rename = "lth")]
    Lth,
    #[serde(rename = "lrr")]
    Lrr,
    #[serde(rename = "iter-lth")]
    IterLth,
    #[serde(rename = "iter-lrr")]
    IterLrr,
}

impl MethodName {
    pub const ALL: [MethodName; 7] = [
        MethodName::Naive,
        MethodName::Finetune,
        MethodName::Parp,
        MethodName::Lth,
        MethodName::Lrr,
        MethodName::IterLth,
        MethodName::IterLrr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MethodName::Naive => "naive",
            MethodName::Finetune => "finetune",
            MethodName::Parp => "parp",
            MethodName::Lth => "lth",
            MethodName::Lrr => "lrr",
            MethodName::IterLth => "iter-lth",
            MethodName::IterLrr => "iter-lrr",
        }
    }

    pub fn is_iterative(self) -> bool {
        matches!(self, MethodName::IterLth | MethodName::IterLrr)
    }

    /// Concrete method for a dense run of `total_epochs` epochs.
    pub fn method(self, grid: &PruneGrid, total_epochs: u32) -> PruneMethod {
        let one_shot = |recovery, rewind_epoch| PruneMethod::OneShot { recovery, rewind_epoch };
        let iterative = |recovery| PruneMethod::Iterative {
            rounds: grid.rounds,
            recovery,
            schedule: grid.iterative_schedule,
            round_epochs: grid.round_epochs,
        };
        match self {
            MethodName::Naive => PruneMethod::Naive,
            MethodName::Finetune => one_shot(Recovery::Finetune, total_epochs),
            MethodName::Parp => one_shot(Recovery::Parp, total_epochs),
            MethodName::Lth => one_shot(Recovery::Lth, 0),
            MethodName::Lrr => one_shot(Recovery::Lrr, total_epochs),
            MethodName::IterLth => iterative(Recovery::Lth),
            MethodName::IterLrr => iterative(Recovery::Lrr),
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodName::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        // 2000 train / 200 test out of the default 2200 samples.
        Self {
            train_fraction: 2000.0 / 2200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Corrupt and time-mask every training batch.
    pub enabled: bool,
    pub policy: AugmentPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneGrid {
    pub sparsities: Vec<f64>,
    pub methods: Vec<MethodName>,
    pub rounds: u32,
    pub round_epochs: u32,
    pub iterative_schedule: IterativeSchedule,
    pub finetune_epochs: u32,
    pub finetune_lr: f64,
    pub ablation_sparsities: Vec<f64>,
    /// Rewind epochs of the ablation; unset means the reference epochs
    /// scaled to the schedule length.
    pub ablation_epochs: Option<Vec<u32>>,
}

impl Default for PruneGrid {
    fn default() -> Self {
        Self {
            sparsities: (0..10).map(|i| f64::from(i) / 10.0).collect(),
            methods: MethodName::ALL.to_vec(),
            rounds: 10,
            round_epochs: 12,
            iterative_schedule: IterativeSchedule::Linear,
            finetune_epochs: 10,
            finetune_lr: 1e-5,
            ablation_sparsities: vec![0.2, 0.5, 0.8],
            ablation_epochs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Epochs to snapshot; unset means the scaled reference schedule.
    /// Epochs 0 and `T` are always stored.
    pub epochs: Option<Vec<u32>>,
}

/// Everything that determines an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub schedule: TrainSchedule,
    pub data: DatasetSpec,
    pub split: SplitConfig,
    pub augment: AugmentConfig,
    pub severity: SeveritySchedule,
    pub prune: PruneGrid,
    pub snapshots: SnapshotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            model: ModelConfig::default(),
            schedule: TrainSchedule::default(),
            data: DatasetSpec::default(),
            split: SplitConfig::default(),
            augment: AugmentConfig::default(),
            severity: SeveritySchedule::default(),
            prune: PruneGrid::default(),
            snapshots: SnapshotConfig::default(),
        }
    }
}

/// The fields that determine a dense run (output location excluded).
#[derive(Serialize)]
struct DenseKey<'a> {
    seed: u64,
    model: &'a ModelConfig,
    schedule: &'a TrainSchedule,
    data: &'a DatasetSpec,
    split: &'a SplitConfig,
    augment: &'a AugmentConfig,
    severity: &'a SeveritySchedule,
    snapshots: Vec<u32>,
}

/// Validates a sparsity list given on the command line.
pub(crate) fn check_grid(field: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(field, "must not be empty"));
    }
    check_sparsities(field, values)
}

fn check_sparsities(field: &str, values: &[f64]) -> Result<()> {
    for (i, &s) in values.iter().enumerate() {
        if !(0.0..1.0).contains(&s) {
            return Err(Error::config(format!("{field}[{i}]"), format!("{s} outside [0, 1)")));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(raw: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(raw).map_err(|e| Error::config("<file>", e.to_string().trim()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().to_string().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        Self::from_toml(&raw)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        self.data.validate()?;
        self.augment.policy.validate()?;
        if self.model.feature_dim != self.data.feature_dim {
            return Err(Error::config("model.feature_dim", "must equal data.feature_dim"));
        }
        if self.model.alphabet_size != self.data.model_alphabet_size() {
            return Err(Error::config(
                "model.alphabet_size",
                format!("must be data.alphabet_size + 1 = {}", self.data.model_alphabet_size()),
            ));
        }
        if self.schedule.batch_frames_cap < self.data.frame_range().1 {
            return Err(Error::config(
                "schedule.batch_frames_cap",
                format!("smaller than the longest possible sequence ({} frames)", self.data.frame_range().1),
            ));
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config("split.train_fraction", "must lie in (0, 1)"));
        }
        check_sparsities("prune.sparsities", &self.prune.sparsities)?;
        check_sparsities("prune.ablation_sparsities", &self.prune.ablation_sparsities)?;
        if self.prune.rounds == 0 {
            return Err(Error::config("prune.rounds", "must be at least 1"));
        }
        if self.prune.round_epochs == 0 {
            return Err(Error::config("prune.round_epochs", "must be at least 1"));
        }
        if self.prune.finetune_epochs == 0 {
            return Err(Error::config("prune.finetune_epochs", "must be at least 1"));
        }
        if !(self.prune.finetune_lr > 0.0) {
            return Err(Error::config("prune.finetune_lr", "must be positive"));
        }
        if let Some(epochs) = &self.snapshots.epochs {
            if let Some(i) = epochs.iter().position(|&e| e > self.schedule.total_epochs) {
                return Err(Error::config(format!("snapshots.epochs[{i}]"), "beyond schedule.total_epochs"));
            }
        }
        if let Some(epochs) = &self.prune.ablation_epochs {
            if let Some(i) = epochs.iter().position(|&e| e > self.schedule.total_epochs) {
                return Err(Error::config(
                    format!("prune.ablation_epochs[{i}]"),
                    "beyond schedule.total_epochs",
                ));
            }
        }
        Ok(())
    }

    /// Sorted snapshot epochs, always including 0 and `T`.
    pub fn snapshot_epochs(&self) -> Vec<u32> {
        let t = self.schedule.total_epochs;
        let mut epochs = self.snapshots.epochs.clone().unwrap_or_else(|| snapshot_schedule(t));
        epochs.extend([0, t]);
        epochs.sort_unstable();
        epochs.dedup();
        epochs
    }

    /// Hex digest of every field that influences the dense run.
    pub fn dense_digest(&self) -> String {
        let key = DenseKey {
            seed: self.seed,
            model: &self.model,
            schedule: &self.schedule,
            data: &self.data,
            split: &self.split,
            augment: &self.augment,
            severity: &self.severity,
            snapshots: self.snapshot_epochs(),
        };
        sha256_hex(serde_json::to_string(&key).expect("config serializes").as_bytes())
    }

    pub fn dense_run_id(&self) -> String {
        format!("dense-{}", &self.dense_digest()[..12])
    }
}
