use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{apply_mask, global_magnitude_mask, PruneMask, Sparsity};
use crate::nn::{train, ModelState, TrainObserver, TrainRun};
use crate::{Error, Result};

/// How the surviving weights are retrained after pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recovery {
    /// Constant small learning rate, pruned weights frozen.
    Finetune,
    /// Fine-tune with pruned weights free to regrow, then re-prune.
    Parp,
    /// Rewind kept weights to `θ_0` and rerun the full schedule.
    Lth,
    /// Keep the trained weights and rerun the full schedule.
    Lrr,
}

impl Recovery {
    pub fn code(self) -> &'static str {
        match self {
            Recovery::Finetune => "finetune",
            Recovery::Parp => "parp",
            Recovery::Lth => "lth",
            Recovery::Lrr => "lrr",
        }
    }
}

/// Cumulative sparsity schedule of iterative pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IterativeSchedule {
    /// Round `k` reaches `min(k / r, target)`: every round removes another
    /// `1/r` of the original prunable weights.
    #[default]
    Linear,
    /// Round `k` removes `1/r` of the remaining weights, `r` rounds at most.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PruneMethod {
    Naive,
    OneShot {
        recovery: Recovery,
        rewind_epoch: u32,
    },
    Iterative {
        rounds: u32,
        recovery: Recovery,
        schedule: IterativeSchedule,
        round_epochs: u32,
    },
}

impl PruneMethod {
    pub fn validate(&self) -> Result<()> {
        if let PruneMethod::Iterative { rounds, recovery, round_epochs, .. } = self {
            if *rounds == 0 {
                return Err(Error::config("prune.rounds", "must be at least 1"));
            }
            if *round_epochs == 0 {
                return Err(Error::config("prune.round_epochs", "must be at least 1"));
            }
            if !matches!(recovery, Recovery::Lth | Recovery::Lrr) {
                return Err(Error::config("prune.recovery", "iterative pruning supports lth or lrr"));
            }
        }
        Ok(())
    }

    pub fn recovery(&self) -> Option<Recovery> {
        match self {
            PruneMethod::Naive => None,
            PruneMethod::OneShot { recovery, .. } | PruneMethod::Iterative { recovery, .. } => Some(*recovery),
        }
    }
}

/// Where a sparse model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: PruneMethod,
    pub target: Sparsity,
    pub source_run: String,
    /// 1-based round for iterative pruning.
    pub round: Option<u32>,
}

/// A pruned model. Every masked-out coordinate of `state` is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub state: ModelState,
    pub mask: PruneMask,
    pub provenance: Provenance,
}

/// Read access to the snapshots `θ_t` of a dense run.
pub trait SnapshotSource {
    fn epochs(&self) -> Vec<u32>;
    fn load(&self, epoch: u32) -> Result<ModelState>;
}

/// In-memory snapshot set.
#[derive(Debug, Clone, Default)]
pub struct MemorySnapshots {
    states: BTreeMap<u32, ModelState>,
}

impl MemorySnapshots {
    pub fn insert(&mut self, state: ModelState) {
        self.states.insert(state.epoch_tag, state);
    }
}

impl SnapshotSource for MemorySnapshots {
    fn epochs(&self) -> Vec<u32> {
        self.states.keys().copied().collect()
    }

    fn load(&self, epoch: u32) -> Result<ModelState> {
        self.states.get(&epoch).cloned().ok_or_else(|| Error::MissingSnapshot {
            epoch,
            available: self.epochs(),
        })
    }
}

/// Retraining settings shared by every recovery strategy.
#[derive(Clone, Copy)]
pub struct RecoveryContext<'a> {
    /// The original dense training run (data, schedule, seeds).
    pub run: TrainRun<'a>,
    pub finetune_epochs: u32,
    pub finetune_lr: f64,
}

fn dense_final(snapshots: &dyn SnapshotSource, ctx: &RecoveryContext<'_>) -> Result<ModelState> {
    snapshots.load(ctx.run.schedule.total_epochs)
}

/// Masks the trained dense model to `target`; no retraining.
pub fn naive_prune(dense: &ModelState, target: Sparsity, source_run: &str) -> Result<SparseModel> {
    let mask = global_magnitude_mask(dense, target, None)?;
    Ok(SparseModel {
        state: apply_mask(dense, &mask)?,
        mask,
        provenance: Provenance {
            method: PruneMethod::Naive,
            target,
            source_run: source_run.to_string(),
            round: None,
        },
    })
}

/// One prune of `θ_T` to `target` followed by a single recovery phase.
///
/// `rewind_epoch` selects the snapshot that seeds LTH/LRR retraining; LTH
/// proper uses 0 and LRR proper uses `T`, any other stored epoch gives the
/// generalized rewind. Finetune and PARP always start from `θ_T`.
pub fn one_shot_prune(
    snapshots: &dyn SnapshotSource,
    source_run: &str,
    target: Sparsity,
    recovery: Recovery,
    rewind_epoch: u32,
    ctx: &RecoveryContext<'_>,
    observer: &mut dyn TrainObserver,
) -> Result<SparseModel> {
    let dense = dense_final(snapshots, ctx)?;
    let mask = global_magnitude_mask(&dense, target, None)?;
    let finetune_run = |schedule: &crate::nn::TrainSchedule| -> crate::nn::TrainSchedule {
        schedule.constant(ctx.finetune_epochs, ctx.finetune_lr)
    };
    let (state, mask) = match recovery {
        Recovery::Finetune => {
            let schedule = finetune_run(ctx.run.schedule);
            let run = TrainRun {
                schedule: &schedule,
                ..ctx.run
            };
            let start = apply_mask(&dense, &mask)?;
            (train(start, &run, 0, Some(&mask), observer)?, mask)
        }
        Recovery::Parp => {
            let schedule = finetune_run(ctx.run.schedule);
            let run = TrainRun {
                schedule: &schedule,
                ..ctx.run
            };
            let start = apply_mask(&dense, &mask)?;
            let regrown = train(start, &run, 0, None, observer)?;
            let final_mask = global_magnitude_mask(&regrown, target, None)?;
            (apply_mask(&regrown, &final_mask)?, final_mask)
        }
        Recovery::Lth | Recovery::Lrr => {
            let rewound = snapshots.load(rewind_epoch)?;
            let mut start = apply_mask(&rewound, &mask)?;
            start.epoch_tag = 0;
            (train(start, &ctx.run, 0, Some(&mask), observer)?, mask)
        }
    };
    Ok(SparseModel {
        state,
        mask,
        provenance: Provenance {
            method: PruneMethod::OneShot { recovery, rewind_epoch },
            target,
            source_run: source_run.to_string(),
            round: None,
        },
    })
}

/// Cumulative per-round sparsities reaching `target`.
pub(crate) fn round_targets(target: Sparsity, rounds: u32, schedule: IterativeSchedule) -> Result<Vec<Sparsity>> {
    const TOL: f64 = 1e-12;
    let t = target.value();
    let r = f64::from(rounds.max(1));
    let mut out = Vec::new();
    match schedule {
        IterativeSchedule::Linear => {
            let mut k = 1u32;
            loop {
                let s = f64::from(k) / r;
                if s >= t - TOL {
                    out.push(target);
                    break;
                }
                out.push(Sparsity::new(s)?);
                k += 1;
            }
        }
        IterativeSchedule::Geometric => {
            let keep_per_round = 1.0 - 1.0 / r;
            for k in 1..=rounds {
                let s = 1.0 - keep_per_round.powi(k as i32);
                if s >= t - TOL {
                    out.push(target);
                    return Ok(out);
                }
                out.push(Sparsity::new(s)?);
            }
            return Err(Error::UnreachableTarget {
                target: t,
                reachable: 1.0 - keep_per_round.powi(rounds as i32),
            });
        }
    }
    Ok(out)
}

/// Prune-retrain rounds with nested masks; returns the model after every
/// round (the last one reaches `target`).
///
/// Each round's mask is computed from the previous round's retrained
/// weights (`θ_T` for the first). LTH then restarts the kept weights from
/// `θ_0`; LRR keeps the current values. Both rerun a warmup-cosine schedule
/// of `round_epochs` epochs.
#[allow(clippy::too_many_arguments)]
pub fn iterative_prune(
    snapshots: &dyn SnapshotSource,
    source_run: &str,
    target: Sparsity,
    recovery: Recovery,
    rounds: u32,
    schedule: IterativeSchedule,
    round_epochs: u32,
    ctx: &RecoveryContext<'_>,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<SparseModel>> {
    let method = PruneMethod::Iterative {
        rounds,
        recovery,
        schedule,
        round_epochs,
    };
    method.validate()?;
    let targets = round_targets(target, rounds, schedule)?;
    let initial = match recovery {
        Recovery::Lth => Some(snapshots.load(0)?),
        _ => None,
    };
    let mut reference = dense_final(snapshots, ctx)?;
    let round_schedule = ctx.run.schedule.with_length(round_epochs);
    let run = TrainRun {
        schedule: &round_schedule,
        ..ctx.run
    };
    let mut mask: Option<PruneMask> = None;
    let mut out = Vec::with_capacity(targets.len());
    for (k, &round_target) in targets.iter().enumerate() {
        let m = global_magnitude_mask(&reference, round_target, mask.as_ref())?;
        let mut start = match &initial {
            Some(theta0) => apply_mask(theta0, &m)?,
            None => apply_mask(&reference, &m)?,
        };
        start.epoch_tag = 0;
        let trained = train(start, &run, 0, Some(&m), observer)?;
        out.push(SparseModel {
            state: trained.clone(),
            mask: m.clone(),
            provenance: Provenance {
                method,
                target: round_target,
                source_run: source_run.to_string(),
                round: Some(k as u32 + 1),
            },
        });
        reference = trained;
        mask = Some(m);
    }
    Ok(out)
}
