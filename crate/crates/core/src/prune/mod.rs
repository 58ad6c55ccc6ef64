//! Global magnitude pruning: masks, naive / one-shot / iterative drivers and
//! the four recovery strategies.

mod mask;
mod methods;
mod serialize;

pub use mask::{apply_mask, effective_param_count, global_magnitude_mask, sparsity_of, MaskTensor, PruneMask, Sparsity};
pub use methods::{
    iterative_prune, naive_prune, one_shot_prune, IterativeSchedule, MemorySnapshots, Provenance, PruneMethod,
    Recovery, RecoveryContext, SnapshotSource, SparseModel,
};
pub(crate) use methods::round_targets;
pub use serialize::{load_mask, save_mask};
