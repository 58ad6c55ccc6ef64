//! Experiment drivers behind the command line: dense training with
//! snapshots, the method comparison grid, the rewind ablation, noise
//! evaluation and the sparse benchmark. All outputs of a dense run live in
//! `out_dir/runs/<run_id>/`.

mod config;
mod dense;
mod grid;
mod noise_eval;

pub use config::{AugmentConfig, MethodName, PruneGrid, RunConfig, SnapshotConfig, SplitConfig};
pub use dense::{augmenter, cmd_train_dense, prepare_data, run_dir, DenseRun, DenseSummary, OpenRun};
pub use grid::{
    cmd_ablate_rewind, cmd_compare_methods, markdown_table, nearest_epoch, AblationOutcome, AblationPoint,
    CellFailure, CellRecord, GridOutcome,
};
pub use noise_eval::{cmd_bench_sparse, cmd_eval_noise, corrupt_set, ModelRef, NoiseRow};

use crate::checkpoint::scale_epoch;

/// Reference rewind epochs scaled to a `total`-epoch schedule.
pub fn default_ablation_epochs(cfg: &RunConfig) -> Vec<u32> {
    match &cfg.prune.ablation_epochs {
        Some(e) => e.clone(),
        None => {
            let t = cfg.schedule.total_epochs;
            let mut e: Vec<u32> = crate::checkpoint::REFERENCE_REWIND_EPOCHS
                .iter()
                .map(|&p| scale_epoch(p, t))
                .collect();
            e.dedup();
            e
        }
    }
}
