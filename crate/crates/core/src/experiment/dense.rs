use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::checkpoint::SnapshotStore;
use crate::data::{generate, split, Sample};
use crate::nn::{evaluate, init_model, train, EpochStats, ModelState, TrainObserver, TrainRun};
use crate::noise::Augmenter;
use crate::prune::SnapshotSource;
use crate::{Error, Result};

const SUMMARY_FILE: &str = "summary.json";

/// Completion record of a dense run; written last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSummary {
    pub run_id: String,
    pub total_epochs: u32,
    pub final_sha256: String,
    pub test_wer: f64,
    pub param_count: usize,
    pub prunable_count: usize,
}

#[derive(Debug, Clone)]
pub struct DenseRun {
    pub summary: DenseSummary,
    pub dir: PathBuf,
    /// True when a completed run was found and nothing was trained.
    pub reused: bool,
}

pub fn run_dir(cfg: &RunConfig, run_id: &str) -> PathBuf {
    cfg.out_dir.join("runs").join(run_id)
}

/// Generates the dataset and splits it into `(train, test)`.
pub fn prepare_data(cfg: &RunConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let all = generate(&cfg.data)?;
    split(&all, cfg.split.train_fraction, cfg.seed)
}

pub fn augmenter(cfg: &RunConfig) -> Option<Augmenter> {
    cfg.augment.enabled.then(|| Augmenter {
        policy: cfg.augment.policy.clone(),
        severity: cfg.severity.clone(),
        seed: cfg.seed,
    })
}

struct DenseObserver {
    store: SnapshotStore,
    epochs: Vec<u32>,
    telemetry: BufWriter<File>,
}

impl TrainObserver for DenseObserver {
    fn after_epoch(&mut self, state: &ModelState, stats: &EpochStats) -> Result<()> {
        writeln!(
            self.telemetry,
            "{},{},{},{}",
            stats.epoch, stats.lr, stats.mean_loss, stats.train_wer
        )?;
        self.telemetry.flush()?;
        if self.epochs.contains(&state.epoch_tag) {
            self.store.save(state)?;
        }
        Ok(())
    }
}

fn read_summary(dir: &Path) -> Result<Option<DenseSummary>> {
    let path = dir.join(SUMMARY_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let raw = fs::read_to_string(&path)?;
    serde_json::from_str(&raw)
        .map(Some)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Trains the dense model of `cfg`, storing snapshots, per-epoch telemetry
/// and a config snapshot under `out_dir/runs/<run_id>`.
///
/// A completed run with the same id is reused; a partial one is discarded
/// and retrained.
pub fn cmd_train_dense(cfg: &RunConfig) -> Result<DenseRun> {
    cfg.validate()?;
    let run_id = cfg.dense_run_id();
    let dir = run_dir(cfg, &run_id);
    if let Some(summary) = read_summary(&dir)? {
        return Ok(DenseRun {
            summary,
            dir,
            reused: true,
        });
    }
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;

    let (train_set, test_set) = prepare_data(cfg)?;
    let augment = augmenter(cfg);
    let initial = init_model(&cfg.model, cfg.seed)?;
    let mut store = SnapshotStore::open_or_create(&dir.join("snapshots"), &run_id)?;
    store.save(&initial)?;
    let mut telemetry = BufWriter::new(File::create(dir.join("telemetry.csv"))?);
    writeln!(telemetry, "epoch,lr,mean_loss,train_wer")?;
    let mut observer = DenseObserver {
        store,
        epochs: cfg.snapshot_epochs(),
        telemetry,
    };
    let run = TrainRun {
        schedule: &cfg.schedule,
        data: &train_set,
        shuffle_seed: cfg.seed,
        word_separator: cfg.data.word_separator_token,
        augment: augment.as_ref(),
    };
    let trained = train(initial, &run, 0, None, &mut observer)?;
    let store = observer.store;
    let final_sha256 = store
        .digest_of(cfg.schedule.total_epochs)
        .ok_or_else(|| Error::InvalidInput("final snapshot missing".into()))?
        .to_string();
    let summary = DenseSummary {
        run_id,
        total_epochs: cfg.schedule.total_epochs,
        final_sha256,
        test_wer: evaluate(&trained, &test_set, cfg.data.word_separator_token)?.percent(),
        param_count: trained.param_count(),
        prunable_count: trained.prunable_count(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(SUMMARY_FILE), json)?;
    Ok(DenseRun {
        summary,
        dir,
        reused: false,
    })
}

/// A completed dense run opened for pruning experiments.
pub struct OpenRun {
    pub summary: DenseSummary,
    pub dir: PathBuf,
    pub store: SnapshotStore,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub augment: Option<Augmenter>,
}

impl OpenRun {
    pub fn open(cfg: &RunConfig, run_id: &str) -> Result<Self> {
        let dir = run_dir(cfg, run_id);
        let summary = read_summary(&dir)?.ok_or_else(|| {
            Error::InvalidInput(format!("dense run {run_id} is missing or incomplete; run train-dense first"))
        })?;
        if summary.total_epochs != cfg.schedule.total_epochs {
            return Err(Error::config(
                "schedule.total_epochs",
                format!("run {run_id} was trained for {} epochs", summary.total_epochs),
            ));
        }
        let store = SnapshotStore::open(&dir.join("snapshots"))?;
        let (train, test) = prepare_data(cfg)?;
        Ok(Self {
            summary,
            dir,
            store,
            train,
            test,
            augment: augmenter(cfg),
        })
    }

    pub fn dense_final(&self) -> Result<ModelState> {
        self.store.load(self.summary.total_epochs)
    }
}
