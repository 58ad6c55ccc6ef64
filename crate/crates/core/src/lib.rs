//! A desk-scale laboratory for magnitude pruning of CTC sequence models.
//!
//! The crate covers the full lifecycle: a small deterministic training engine
//! ([`nn`]), the CTC objective and WER metric ([`ctc`], [`wer`]), a synthetic
//! sequence-recognition task ([`data`]), feature-space corruptions ([`noise`]),
//! naive / one-shot / iterative pruning ([`prune`]), a snapshot store used for
//! rewinding ([`checkpoint`]), CSR kernels ([`sparse`]) and the experiment
//! drivers behind the command line tool ([`experiment`]).

pub mod checkpoint;
pub mod ctc;
pub mod data;
mod error;
pub mod experiment;
pub mod nn;
pub mod noise;
pub mod prune;
pub mod rng;
pub mod sparse;
pub mod wer;

pub use error::{Error, Result};
