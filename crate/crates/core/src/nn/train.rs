use ndarray::Array2;
use rand::Rng as _;

use super::{lr_at, AdamW, AdamWConfig, Gradients, ModelState, Network, TrainSchedule};
use crate::ctc::{ctc_loss, greedy_decode, Transcript};
use crate::data::{FeatureSequence, Sample};
use crate::noise::Augmenter;
use crate::prune::PruneMask;
use crate::wer::{token_wer, WerScore};
use crate::{rng, Error, Result};

/// A group of samples whose total frame count fits the batch cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub sequences: Vec<FeatureSequence>,
    pub transcripts: Vec<Transcript>,
}

impl Batch {
    pub fn new(sequences: Vec<FeatureSequence>, transcripts: Vec<Transcript>, frames_cap: usize) -> Result<Self> {
        if sequences.len() != transcripts.len() {
            return Err(Error::InvalidInput("batch needs one transcript per sequence".into()));
        }
        let frames = sequences.iter().map(FeatureSequence::frames).sum::<usize>();
        if frames > frames_cap {
            return Err(Error::InvalidInput(format!("batch has {frames} frames, cap is {frames_cap}")));
        }
        Ok(Self { sequences, transcripts })
    }

    pub fn frames(&self) -> usize {
        self.sequences.iter().map(FeatureSequence::frames).sum()
    }
}

/// Shuffles sample indices for `epoch` and packs them greedily, in shuffled
/// order, into batches of at most `frames_cap` frames.
pub fn make_batches(data: &[Sample], frames_cap: usize, seed: u64, epoch: u32) -> Result<Vec<Vec<usize>>> {
    if let Some(s) = data.iter().find(|s| s.features.frames() > frames_cap) {
        return Err(Error::InvalidInput(format!(
            "sample with {} frames exceeds batch cap {frames_cap}",
            s.features.frames()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = rng::stream(seed, rng::mix(&[0xBA, u64::from(epoch)]));
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut frames = 0;
    for idx in order {
        let n = data[idx].features.frames();
        if frames + n > frames_cap && !current.is_empty() {
            batches.push(std::mem::take(&mut current));
            frames = 0;
        }
        current.push(idx);
        frames += n;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    Ok(batches)
}

/// Per-epoch telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Number of completed epochs (the new `epoch_tag`).
    pub epoch: u32,
    /// Learning rate of the last step.
    pub lr: f64,
    pub mean_loss: f64,
    /// Training-batch WER in percent, measured on the forward passes used
    /// for the updates.
    pub train_wer: f64,
}

/// Hooks invoked by [`train`].
pub trait TrainObserver {
    /// Called once with the (masked) starting weights.
    fn on_start(&mut self, _state: &ModelState) -> Result<()> {
        Ok(())
    }

    fn after_step(&mut self, _state: &ModelState) -> Result<()> {
        Ok(())
    }

    fn after_epoch(&mut self, _state: &ModelState, _stats: &EpochStats) -> Result<()> {
        Ok(())
    }
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Everything a training run needs besides the model and mask.
#[derive(Clone, Copy)]
pub struct TrainRun<'a> {
    pub schedule: &'a TrainSchedule,
    pub data: &'a [Sample],
    pub shuffle_seed: u64,
    pub word_separator: u16,
    pub augment: Option<&'a Augmenter>,
}

/// Trains epochs `[start_epoch, total_epochs)` with a fresh AdamW.
///
/// With a `grad_mask` the model is masked first and masked gradient entries
/// are zeroed before every optimizer step, so pruned weights stay exactly
/// zero.
pub fn train(
    mut model: ModelState,
    run: &TrainRun<'_>,
    start_epoch: u32,
    grad_mask: Option<&PruneMask>,
    observer: &mut dyn TrainObserver,
) -> Result<ModelState> {
    let schedule = run.schedule;
    schedule.validate()?;
    if start_epoch > schedule.total_epochs {
        return Err(Error::InvalidInput(format!(
            "start epoch {start_epoch} beyond total epochs {}",
            schedule.total_epochs
        )));
    }
    let multipliers = match grad_mask {
        Some(mask) => {
            let m = mask.multipliers(&model)?;
            model = crate::prune::apply_mask(&model, mask)?;
            Some(m)
        }
        None => None,
    };
    let mut optimizer = AdamW::new(
        AdamWConfig {
            beta1: schedule.beta1,
            beta2: schedule.beta2,
            eps: schedule.eps,
            weight_decay: schedule.weight_decay,
        },
        &model,
    );
    observer.on_start(&model)?;

    for epoch in start_epoch..schedule.total_epochs {
        let batches = make_batches(run.data, schedule.batch_frames_cap, run.shuffle_seed, epoch)?;
        let steps = batches.len();
        let mut loss_sum = 0.0;
        let mut wer = WerScore::default();
        let mut lr = 0.0;
        for (b, indices) in batches.iter().enumerate() {
            lr = lr_at(schedule, f64::from(epoch) + b as f64 / steps as f64)?;
            let mut seqs: Vec<FeatureSequence> = indices.iter().map(|&i| run.data[i].features.clone()).collect();
            if let Some(aug) = run.augment {
                aug.apply(epoch, b, &mut seqs);
            }
            let net = Network::from_state(&model)?;
            let mut grads = Gradients::zeros_like(&model);
            let scale = 1.0 / indices.len() as f64;
            for (seq, &i) in seqs.iter().zip(indices) {
                let target = &run.data[i].transcript;
                let mut loss = 0.0;
                let (logprobs, g) = net.forward_backward(seq.to_array().view(), |lp| {
                    let (l, grad): (f64, Array2<f64>) = ctc_loss(lp, target)?;
                    loss = l;
                    Ok(grad * scale)
                })?;
                grads.accumulate(&g, 1.0);
                loss_sum += loss;
                let hyp = greedy_decode(logprobs.view());
                wer += token_wer(target.tokens(), hyp.tokens(), run.word_separator)?;
            }
            if let Some(mults) = &multipliers {
                for (g, m) in grads.values.iter_mut().zip(mults) {
                    if let Some(m) = m {
                        g.iter_mut().zip(m).for_each(|(gv, mv)| *gv *= mv);
                    }
                }
            }
            optimizer.step(&mut model, &grads, lr)?;
            observer.after_step(&model)?;
        }
        model.epoch_tag = epoch + 1;
        let stats = EpochStats {
            epoch: epoch + 1,
            lr,
            mean_loss: loss_sum / run.data.len().max(1) as f64,
            train_wer: wer.percent(),
        };
        observer.after_epoch(&model, &stats)?;
    }
    Ok(model)
}

/// Corpus-level greedy-decoding WER of `model` on `samples`.
pub fn evaluate(model: &ModelState, samples: &[Sample], word_separator: u16) -> Result<WerScore> {
    let net = Network::from_state(model)?;
    let mut total = WerScore::default();
    for s in samples {
        let lp = net.forward(s.features.to_array().view())?;
        let hyp = greedy_decode(lp.view());
        total += token_wer(s.transcript.tokens(), hyp.tokens(), word_separator)?;
    }
    Ok(total)
}
