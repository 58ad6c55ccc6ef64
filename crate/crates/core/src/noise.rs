//! Feature-space corruptions at ten severity levels, the augmentation
//! sampling policy and adaptive time masking.
//!
//! Kinds mirror visual corruptions on the temporal feature stream:
//!
//! | kind | operator |
//! |------|----------|
//! | `GB` | temporal Gaussian smoothing, σ ∝ level |
//! | `MB` | one-sided (causal) box filter, width ∝ level |
//! | `P`  | downsample by k then repeat, k ∝ level |
//! | `BW` | zero random feature-dim blocks over random frame spans |
//! | `GN` | additive Gaussian noise, σ ∝ level |
//! | `C`  | shrink deviations from the sequence mean by `1 − 0.09·level` |
//! | `VC` | uniform quantization to `2^(9 − ⌈0.8·level⌉)` bins |
//!
//! `BW`, `GB`, `MB` and `P` are the kinds seen during training; `GN`, `C`
//! and `VC` are held out for evaluation.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::FeatureSequence;
use crate::{rng, Error, Result};

pub const MAX_LEVEL: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoiseKind {
    #[serde(rename = "CLEAN")]
    Clean,
    #[serde(rename = "BW")]
    BlockWise,
    #[serde(rename = "GB")]
    GaussianBlur,
    #[serde(rename = "MB")]
    MotionBlur,
    #[serde(rename = "P")]
    Pixelate,
    #[serde(rename = "GN")]
    GaussianNoise,
    #[serde(rename = "C")]
    Contrast,
    #[serde(rename = "VC")]
    Compression,
}

impl NoiseKind {
    pub const SEEN: [NoiseKind; 4] = [
        NoiseKind::BlockWise,
        NoiseKind::GaussianBlur,
        NoiseKind::MotionBlur,
        NoiseKind::Pixelate,
    ];
    pub const UNSEEN: [NoiseKind; 3] = [NoiseKind::Compression, NoiseKind::GaussianNoise, NoiseKind::Contrast];

    pub fn code(self) -> &'static str {
        match self {
            NoiseKind::Clean => "CLEAN",
            NoiseKind::BlockWise => "BW",
            NoiseKind::GaussianBlur => "GB",
            NoiseKind::MotionBlur => "MB",
            NoiseKind::Pixelate => "P",
            NoiseKind::GaussianNoise => "GN",
            NoiseKind::Contrast => "C",
            NoiseKind::Compression => "VC",
        }
    }

    fn stream_id(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "CLEAN" => NoiseKind::Clean,
            "BW" => NoiseKind::BlockWise,
            "GB" => NoiseKind::GaussianBlur,
            "MB" => NoiseKind::MotionBlur,
            "P" => NoiseKind::Pixelate,
            "GN" => NoiseKind::GaussianNoise,
            "C" => NoiseKind::Contrast,
            "VC" => NoiseKind::Compression,
            _ => return Err(Error::UnknownNoiseKind(s.to_string())),
        })
    }
}

/// A corruption kind at a level in `0..=10`; level 0 is always clean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSpec {
    kind: NoiseKind,
    level: u8,
}

impl NoiseSpec {
    pub const CLEAN: NoiseSpec = NoiseSpec {
        kind: NoiseKind::Clean,
        level: 0,
    };

    /// Any kind at level 0 normalizes to [`NoiseSpec::CLEAN`].
    pub fn new(kind: NoiseKind, level: u8) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidInput(format!("noise level {level} above {MAX_LEVEL}")));
        }
        if level == 0 || kind == NoiseKind::Clean {
            if kind == NoiseKind::Clean && level != 0 {
                return Err(Error::InvalidInput("CLEAN noise must have level 0".into()));
            }
            return Ok(Self::CLEAN);
        }
        Ok(Self { kind, level })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn level(&self) -> u8 {
        self.level
    }
}

/// Per-level severity constants. Every operator parameter is the level
/// times the matching constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeveritySchedule {
    /// Gaussian-blur σ in frames per level.
    pub blur_sigma_per_level: f64,
    /// Extra motion-blur window frames per level (window = 1 + level·c).
    pub motion_width_per_level: usize,
    /// Extra pixelation factor per level (k = 1 + level·c).
    pub pixelate_factor_per_level: usize,
    /// Number of zeroed blocks per level.
    pub block_count_per_level: usize,
    /// Frame span of each block per level.
    pub block_frames_per_level: usize,
    /// Fraction of feature dimensions covered by a block.
    pub block_dim_fraction: f64,
    /// Gaussian-noise σ per level.
    pub noise_sigma_per_level: f64,
    /// Contrast shrink per level.
    pub contrast_per_level: f64,
}

impl Default for SeveritySchedule {
    fn default() -> Self {
        Self {
            blur_sigma_per_level: 0.3,
            motion_width_per_level: 1,
            pixelate_factor_per_level: 1,
            block_count_per_level: 1,
            block_frames_per_level: 1,
            block_dim_fraction: 0.25,
            noise_sigma_per_level: 0.12,
            contrast_per_level: 0.09,
        }
    }
}

impl SeveritySchedule {
    pub fn gaussian_noise_sigma(&self, level: u8) -> f64 {
        self.noise_sigma_per_level * f64::from(level)
    }

    /// Contrast factor `1 − c·level`, computed in hundredths so the default
    /// schedule yields exactly 0.1 at level 10.
    pub fn contrast_factor(&self, level: u8) -> f64 {
        let hundredths = (self.contrast_per_level * 100.0).round();
        if (hundredths / 100.0 - self.contrast_per_level).abs() < 1e-12 {
            (100.0 - hundredths * f64::from(level)) / 100.0
        } else {
            1.0 - self.contrast_per_level * f64::from(level)
        }
    }

    /// Quantization bins `2^(9 − ⌈0.8·level⌉)`.
    pub fn compression_bins(level: u8) -> u32 {
        let bits = 9 - (4 * u32::from(level)).div_ceil(5);
        1 << bits
    }
}

fn gaussian_blur(seq: &FeatureSequence, sigma: f64) -> Vec<f32> {
    let (n, d) = (seq.frames(), seq.dim());
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|j| (-(j * j) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = weights.iter().sum();
    let mut out = vec![0.0f32; n * d];
    for t in 0..n {
        for i in 0..d {
            let mut acc = 0.0;
            for (w, j) in weights.iter().zip(-radius..=radius) {
                let src = (t as isize + j).clamp(0, n as isize - 1) as usize;
                acc += w * f64::from(seq.frame(src)[i]);
            }
            out[t * d + i] = (acc / norm) as f32;
        }
    }
    out
}

fn motion_blur(seq: &FeatureSequence, width: usize) -> Vec<f32> {
    let (n, d) = (seq.frames(), seq.dim());
    let mut out = vec![0.0f32; n * d];
    for t in 0..n {
        let lo = (t + 1).saturating_sub(width);
        let count = (t - lo + 1) as f64;
        for i in 0..d {
            let sum: f64 = (lo..=t).map(|s| f64::from(seq.frame(s)[i])).sum();
            out[t * d + i] = (sum / count) as f32;
        }
    }
    out
}

fn pixelate(seq: &FeatureSequence, factor: usize) -> Vec<f32> {
    let (n, d) = (seq.frames(), seq.dim());
    let mut out = Vec::with_capacity(n * d);
    for t in 0..n {
        out.extend_from_slice(seq.frame((t / factor) * factor));
    }
    out
}

fn block_wise(seq: &FeatureSequence, level: u8, sched: &SeveritySchedule, rng: &mut rng::Rng) -> Vec<f32> {
    let (n, d) = (seq.frames(), seq.dim());
    let mut out = seq.values().to_vec();
    let count = usize::from(level) * sched.block_count_per_level;
    let span = (usize::from(level) * sched.block_frames_per_level).clamp(1, n);
    let width = ((sched.block_dim_fraction * d as f64).ceil() as usize).clamp(1, d);
    for _ in 0..count {
        let t0 = rng.random_range(0..=n - span);
        let i0 = rng.random_range(0..=d - width);
        for t in t0..t0 + span {
            out[t * d + i0..t * d + i0 + width].fill(0.0);
        }
    }
    out
}

fn gaussian_noise(seq: &FeatureSequence, sigma: f64, rng: &mut rng::Rng) -> Vec<f32> {
    seq.values()
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            (f64::from(v) + sigma * z) as f32
        })
        .collect()
}

fn contrast(seq: &FeatureSequence, factor: f64) -> Vec<f32> {
    let vals = seq.values();
    let mean = vals.iter().map(|&v| f64::from(v)).sum::<f64>() / vals.len() as f64;
    vals.iter()
        .map(|&v| (mean + (f64::from(v) - mean) * factor) as f32)
        .collect()
}

fn quantize(seq: &FeatureSequence, bins: u32) -> Vec<f32> {
    let vals = seq.values();
    let lo = vals.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    if hi <= lo {
        return vals.to_vec();
    }
    let step = (hi - lo) / f64::from(bins);
    vals.iter()
        .map(|&v| {
            let idx = ((f64::from(v) - lo) / step).floor().clamp(0.0, f64::from(bins - 1));
            (lo + (idx + 0.5) * step) as f32
        })
        .collect()
}

/// Applies `spec` to `seq`. The random stream depends on `(seed, kind)` but
/// not on the level, so random draws are shared across levels.
pub fn corrupt(seq: &FeatureSequence, spec: NoiseSpec, seed: u64, sched: &SeveritySchedule) -> FeatureSequence {
    let level = spec.level();
    let mut rng = rng::stream(seed, rng::mix(&[0xC0, spec.kind().stream_id()]));
    let values = match spec.kind() {
        NoiseKind::Clean => return seq.clone(),
        NoiseKind::GaussianBlur => gaussian_blur(seq, sched.blur_sigma_per_level * f64::from(level)),
        NoiseKind::MotionBlur => motion_blur(seq, 1 + usize::from(level) * sched.motion_width_per_level),
        NoiseKind::Pixelate => pixelate(seq, 1 + usize::from(level) * sched.pixelate_factor_per_level),
        NoiseKind::BlockWise => block_wise(seq, level, sched, &mut rng),
        NoiseKind::GaussianNoise => gaussian_noise(seq, sched.gaussian_noise_sigma(level), &mut rng),
        NoiseKind::Contrast => contrast(seq, sched.contrast_factor(level)),
        NoiseKind::Compression => quantize(seq, SeveritySchedule::compression_bins(level)),
    };
    let mut out = seq.clone();
    out.values_mut().copy_from_slice(&values);
    out
}

/// Training-time augmentation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub seen_kinds: Vec<NoiseKind>,
    pub include_clean: bool,
    pub time_mask_max_frames: usize,
    /// Number of masks per frame of utterance length.
    pub time_mask_rate: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            seen_kinds: NoiseKind::SEEN.to_vec(),
            include_clean: true,
            // 0.4 s at 25 frames per second.
            time_mask_max_frames: 10,
            time_mask_rate: 0.01,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.seen_kinds.is_empty() {
            return Err(Error::config("augment.seen_kinds", "must not be empty"));
        }
        if self.seen_kinds.contains(&NoiseKind::Clean) {
            return Err(Error::config("augment.seen_kinds", "use include_clean for clean data"));
        }
        if !(self.time_mask_rate >= 0.0) {
            return Err(Error::config("augment.time_mask_rate", "must be non-negative"));
        }
        if self.time_mask_max_frames == 0 {
            return Err(Error::config("augment.time_mask_max_frames", "must be positive"));
        }
        Ok(())
    }
}

/// Draws a corruption uniformly among the seen kinds (plus clean when
/// enabled); a non-clean draw gets a level uniform in `1..=10`.
pub fn sample_augmentation(policy: &AugmentPolicy, rng: &mut rng::Rng) -> NoiseSpec {
    let choices = policy.seen_kinds.len() + usize::from(policy.include_clean);
    let pick = rng.random_range(0..choices);
    if pick == policy.seen_kinds.len() {
        return NoiseSpec::CLEAN;
    }
    let level = rng.random_range(1..=MAX_LEVEL);
    NoiseSpec {
        kind: policy.seen_kinds[pick],
        level,
    }
}

/// Draws the `(start, length)` spans of [`time_mask`]: `⌊rate · N⌋` spans,
/// each of length uniform in `[1, time_mask_max_frames]` (clipped to `N`).
pub fn time_mask_spans(frames: usize, policy: &AugmentPolicy, rng: &mut rng::Rng) -> Vec<(usize, usize)> {
    let masks = (policy.time_mask_rate * frames as f64).floor() as usize;
    (0..masks)
        .map(|_| {
            let len = rng.random_range(1..=policy.time_mask_max_frames).min(frames);
            (rng.random_range(0..=frames - len), len)
        })
        .collect()
}

/// Zeroes every frame inside the spans of [`time_mask_spans`].
pub fn time_mask(seq: &FeatureSequence, policy: &AugmentPolicy, rng: &mut rng::Rng) -> FeatureSequence {
    let mut out = seq.clone();
    let d = seq.dim();
    for (start, len) in time_mask_spans(seq.frames(), policy, rng) {
        out.values_mut()[start * d..(start + len) * d].fill(0.0);
    }
    out
}

/// Bundles the policy and severities applied to training batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmenter {
    pub policy: AugmentPolicy,
    pub severity: SeveritySchedule,
    pub seed: u64,
}

impl Augmenter {
    /// Draws one corruption for the whole batch, then corrupts and
    /// time-masks each sequence. Returns the drawn spec.
    pub fn apply(&self, epoch: u32, batch: usize, seqs: &mut [FeatureSequence]) -> NoiseSpec {
        let mut rng = rng::stream(self.seed, rng::mix(&[0xA0, u64::from(epoch), batch as u64]));
        let spec = sample_augmentation(&self.policy, &mut rng);
        for (i, seq) in seqs.iter_mut().enumerate() {
            let seed = rng::mix(&[self.seed, u64::from(epoch), batch as u64, i as u64]);
            let corrupted = corrupt(seq, spec, seed, &self.severity);
            *seq = time_mask(&corrupted, &self.policy, &mut rng);
        }
        spec
    }
}
