use std::f64::consts::PI;

use super::{LrShape, TrainSchedule};
use crate::{Error, Result};

/// Learning rate at a fractional epoch in `[0, total_epochs]`.
///
/// Warmup-cosine: linear ramp from 0 to `peak_lr` over the warmup epochs,
/// then `peak · (1 + cos(π · (e − w) / (T − w))) / 2` down to 0 at `T`.
pub fn lr_at(schedule: &TrainSchedule, epoch: f64) -> Result<f64> {
    let total = f64::from(schedule.total_epochs);
    if !(0.0..=total).contains(&epoch) {
        return Err(Error::InvalidInput(format!("epoch {epoch} outside [0, {total}]")));
    }
    let peak = schedule.peak_lr;
    match schedule.shape {
        LrShape::Constant => Ok(peak),
        LrShape::WarmupCosine => {
            let warmup = f64::from(schedule.warmup_epochs);
            if epoch < warmup {
                Ok(peak * epoch / warmup)
            } else {
                let progress = (epoch - warmup) / (total - warmup);
                Ok(peak * 0.5 * (1.0 + (PI * progress).cos()))
            }
        }
    }
}
