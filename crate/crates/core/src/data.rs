//! Synthetic sequence-recognition task.
//!
//! Each grapheme owns a fixed random prototype vector. A sample is a
//! transcript of words (graphemes joined by a separator token) rendered as a
//! feature sequence: every token repeats its prototype for a random
//! duration, the first frame of each token is the midpoint between the
//! previous and the current prototype, and i.i.d. Gaussian jitter is added.
//! Adjacent tokens are always distinct.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ctc::Transcript;
use crate::{rng, Error, Result};

/// An `N × feature_dim` frame matrix, row-major `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(frames: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::Shape(format!("empty feature sequence {frames}x{dim}")));
        }
        if values.len() != frames * dim {
            return Err(Error::Shape(format!(
                "{} values for a {frames}x{dim} sequence",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature values must be finite".into()));
        }
        Ok(Self { frames, dim, values })
    }

    pub fn from_array(a: ArrayView2<'_, f64>) -> Self {
        let (frames, dim) = a.dim();
        Self {
            frames,
            dim,
            values: a.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.frames, self.dim), |(t, i)| f64::from(self.values[t * self.dim + i]))
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

/// One `(X, Y)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureSequence,
    pub transcript: Transcript,
}

/// Generator parameters. `alphabet_size` counts graphemes (separator
/// included, blank excluded); ranges are inclusive `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub num_samples: usize,
    pub alphabet_size: u16,
    pub word_separator_token: u16,
    pub words_per_transcript: (usize, usize),
    pub tokens_per_word: (usize, usize),
    pub frames_per_token: (usize, usize),
    pub feature_dim: usize,
    pub emission_noise_std: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_samples: 2200,
            alphabet_size: 12,
            word_separator_token: 12,
            words_per_transcript: (3, 8),
            tokens_per_word: (1, 4),
            frames_per_token: (2, 6),
            feature_dim: 12,
            emission_noise_std: 0.3,
            seed: 1,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("data.words_per_transcript", self.words_per_transcript),
            ("data.tokens_per_word", self.tokens_per_word),
            ("data.frames_per_token", self.frames_per_token),
        ];
        for (field, (lo, hi)) in ranges {
            if lo == 0 || lo > hi {
                return Err(Error::config(field, format!("invalid range [{lo}, {hi}]")));
            }
        }
        if self.alphabet_size < 2 {
            return Err(Error::config("data.alphabet_size", "needs a separator and at least one grapheme"));
        }
        if self.word_separator_token == 0 || self.word_separator_token > self.alphabet_size {
            return Err(Error::config(
                "data.word_separator_token",
                format!("must lie in [1, {}]", self.alphabet_size),
            ));
        }
        if self.tokens_per_word.1 > 1 && self.alphabet_size < 3 {
            return Err(Error::config(
                "data.alphabet_size",
                "multi-token words need two distinct graphemes besides the separator",
            ));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("data.feature_dim", "must be positive"));
        }
        if !(self.emission_noise_std >= 0.0) || !self.emission_noise_std.is_finite() {
            return Err(Error::config("data.emission_noise_std", "must be finite and non-negative"));
        }
        if self.num_samples == 0 {
            return Err(Error::config("data.num_samples", "must be positive"));
        }
        Ok(())
    }

    /// Output alphabet of a model trained on this task (graphemes + blank).
    pub fn model_alphabet_size(&self) -> usize {
        usize::from(self.alphabet_size) + 1
    }

    /// Inclusive bounds on the number of frames of any sample.
    pub fn frame_range(&self) -> (usize, usize) {
        let (wl, wh) = self.words_per_transcript;
        let (tl, th) = self.tokens_per_word;
        let (fl, fh) = self.frames_per_token;
        (wl * tl * fl + (wl - 1) * fl, wh * th * fh + (wh - 1) * fh)
    }

    fn letters(&self) -> Vec<u16> {
        (1..=self.alphabet_size).filter(|&t| t != self.word_separator_token).collect()
    }

    /// Prototype vector of every grapheme id; index 0 (blank) is unused.
    pub fn prototypes(&self) -> Vec<Vec<f64>> {
        let mut rng = rng::stream(self.seed, 0);
        let mut out = vec![vec![0.0; self.feature_dim]];
        for _ in 1..=self.alphabet_size {
            out.push((0..self.feature_dim).map(|_| rng.sample(StandardNormal)).collect());
        }
        out
    }
}

fn draw_transcript(spec: &DatasetSpec, letters: &[u16], rng: &mut rng::Rng) -> Vec<u16> {
    let words = rng.random_range(spec.words_per_transcript.0..=spec.words_per_transcript.1);
    let mut tokens = Vec::new();
    for w in 0..words {
        if w > 0 {
            tokens.push(spec.word_separator_token);
        }
        let len = rng.random_range(spec.tokens_per_word.0..=spec.tokens_per_word.1);
        let mut prev = None;
        for _ in 0..len {
            let tok = loop {
                let t = letters[rng.random_range(0..letters.len())];
                if Some(t) != prev {
                    break t;
                }
            };
            tokens.push(tok);
            prev = Some(tok);
        }
    }
    tokens
}

fn render(spec: &DatasetSpec, prototypes: &[Vec<f64>], tokens: &[u16], rng: &mut rng::Rng) -> FeatureSequence {
    let d = spec.feature_dim;
    let durations: Vec<usize> = tokens
        .iter()
        .map(|_| rng.random_range(spec.frames_per_token.0..=spec.frames_per_token.1))
        .collect();
    let frames: usize = durations.iter().sum();
    let mut values = Vec::with_capacity(frames * d);
    for (j, (&tok, &dur)) in tokens.iter().zip(&durations).enumerate() {
        let cur = &prototypes[usize::from(tok)];
        for f in 0..dur {
            for i in 0..d {
                let clean = if f == 0 && j > 0 {
                    0.5 * (prototypes[usize::from(tokens[j - 1])][i] + cur[i])
                } else {
                    cur[i]
                };
                let jitter: f64 = rng.sample(StandardNormal);
                values.push((clean + spec.emission_noise_std * jitter) as f32);
            }
        }
    }
    FeatureSequence { frames, dim: d, values }
}

/// Generates `spec.num_samples` samples; sample `i` depends only on
/// `(spec, i)`.
pub fn generate(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let prototypes = spec.prototypes();
    let letters = spec.letters();
    (0..spec.num_samples)
        .map(|i| {
            let mut rng = rng::stream(spec.seed, i as u64 + 1);
            let tokens = draw_transcript(spec, &letters, &mut rng);
            let features = render(spec, &prototypes, &tokens, &mut rng);
            Ok(Sample {
                features,
                transcript: Transcript::new(tokens)?,
            })
        })
        .collect()
}

/// Deterministic disjoint partition; both halves keep the original order.
pub fn split(dataset: &[Sample], train_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n = dataset.len();
    let n_train = ((train_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, rng::mix(&[0x5b17]));
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (sample, keep) in dataset.iter().zip(in_train) {
        if keep {
            train.push(sample.clone());
        } else {
            test.push(sample.clone());
        }
    }
    Ok((train, test))
}

const DATASET_MAGIC: &[u8; 4] = b"PLDS";
const DATASET_VERSION: u32 = 1;

/// Writes `samples` in the flat little-endian dataset format: header with
/// the spec fields, record count, then per sample `N`, `N·d` f32 frames,
/// `L`, `L` u16 tokens.
pub fn export(path: &Path, spec: &DatasetSpec, samples: &[Sample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(spec.num_samples as u64).to_le_bytes())?;
    w.write_all(&spec.alphabet_size.to_le_bytes())?;
    w.write_all(&spec.word_separator_token.to_le_bytes())?;
    for (lo, hi) in [spec.words_per_transcript, spec.tokens_per_word, spec.frames_per_token] {
        w.write_all(&(lo as u32).to_le_bytes())?;
        w.write_all(&(hi as u32).to_le_bytes())?;
    }
    w.write_all(&(spec.feature_dim as u32).to_le_bytes())?;
    w.write_all(&spec.emission_noise_std.to_le_bytes())?;
    w.write_all(&spec.seed.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        if s.features.dim != spec.feature_dim {
            return Err(Error::Shape("sample feature_dim differs from spec".into()));
        }
        w.write_all(&(s.features.frames as u32).to_le_bytes())?;
        for v in &s.features.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(s.transcript.len() as u32).to_le_bytes())?;
        for t in s.transcript.tokens() {
            w.write_all(&t.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct LeReader<R: Read>(R);

impl<R: Read> LeReader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated dataset: {e}")))?;
        Ok(b)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

/// Reads a file written by [`export`].
pub fn import(path: &Path) -> Result<(DatasetSpec, Vec<Sample>)> {
    let mut r = LeReader(BufReader::new(File::open(path)?));
    if &r.bytes::<4>()? != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let num_samples = r.u64()? as usize;
    let alphabet_size = r.u16()?;
    let word_separator_token = r.u16()?;
    let mut range = || -> Result<(usize, usize)> { Ok((r.u32()? as usize, r.u32()? as usize)) };
    let words_per_transcript = range()?;
    let tokens_per_word = range()?;
    let frames_per_token = range()?;
    let spec = DatasetSpec {
        num_samples,
        alphabet_size,
        word_separator_token,
        words_per_transcript,
        tokens_per_word,
        frames_per_token,
        feature_dim: r.u32()? as usize,
        emission_noise_std: r.f64()?,
        seed: r.u64()?,
    };
    spec.validate()?;
    let records = r.u64()? as usize;
    let mut samples = Vec::with_capacity(records);
    for _ in 0..records {
        let frames = r.u32()? as usize;
        let values = (0..frames * spec.feature_dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let len = r.u32()? as usize;
        let tokens = (0..len).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            features: FeatureSequence::new(frames, spec.feature_dim, values)?,
            transcript: Transcript::new(tokens)?,
        });
    }
    Ok((spec, samples))
}
