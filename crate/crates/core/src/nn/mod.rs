//! Minimal deterministic training engine.
//!
//! The reference network is a 1D convolution frontend, a stack of
//! `{linear, gated linear unit, residual add, layer norm}` blocks and a
//! linear CTC head producing per-frame log-probabilities. Parameters are
//! stored as `f32` (the snapshot format) while every forward/backward pass
//! and optimizer update runs in `f64`.

mod config;
mod model;
mod optim;
mod params;
mod schedule;
mod train;

pub use config::{LrShape, ModelConfig, TrainSchedule};
pub use model::{backward, forward, Gradients, Network};
pub use optim::{AdamW, AdamWConfig};
pub use params::{init_model, ModelState, ParamTensor};
pub use schedule::lr_at;
pub use train::{
    evaluate, make_batches, train, Batch, EpochStats, NoopObserver, TrainObserver, TrainRun,
};
