//! Connectionist temporal classification: loss with exact gradient and
//! greedy decoding.
//!
//! Label 0 is the blank. Log-probabilities are `[frames, alphabet]` matrices.
//! All recursions run in log space; impossible states hold [`LOG_ZERO`]
//! instead of `-inf` so differences never produce NaN.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// The CTC blank id.
pub const BLANK: u16 = 0;

/// Stand-in for `ln 0`.
pub const LOG_ZERO: f64 = -1.0e30;

/// A grapheme transcription. Tokens never contain the blank id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transcript {
    tokens: Vec<u16>,
}

impl Transcript {
    /// Builds a training target: non-empty and blank-free.
    pub fn new(tokens: Vec<u16>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("transcript must contain at least one token".into()));
        }
        Self::decoded(tokens)
    }

    /// Builds a possibly empty transcript, as produced by a decoder.
    pub fn decoded(tokens: Vec<u16>) -> Result<Self> {
        if tokens.contains(&BLANK) {
            return Err(Error::InvalidInput("transcript contains the blank id".into()));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[u16] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Minimum number of frames that can emit this transcript: one per
    /// token plus one separating blank per adjacent repeat.
    pub fn min_frames(&self) -> usize {
        let repeats = self.tokens.windows(2).filter(|w| w[0] == w[1]).count();
        self.tokens.len() + repeats
    }
}

/// `ln(e^a + e^b)` with [`LOG_ZERO`] absorbing.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi <= LOG_ZERO {
        return LOG_ZERO;
    }
    if lo <= LOG_ZERO {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Negative log-likelihood of `target` under `logprobs` and its gradient
/// with respect to every entry of `logprobs`.
///
/// Entries of `logprobs` are treated as free inputs: the gradient is the
/// negated state occupancy, so it does not assume rows are normalized.
pub fn ctc_loss(logprobs: ArrayView2<'_, f64>, target: &Transcript) -> Result<(f64, Array2<f64>)> {
    let (frames, alphabet) = logprobs.dim();
    if target.is_empty() {
        return Err(Error::InvalidInput("CTC target must be non-empty".into()));
    }
    if let Some(&bad) = target.tokens().iter().find(|&&t| t as usize >= alphabet) {
        return Err(Error::InvalidInput(format!(
            "target token {bad} outside alphabet of size {alphabet}"
        )));
    }
    let required = target.min_frames();
    if frames < required {
        return Err(Error::CtcInfeasible { required, frames });
    }

    // Extended label sequence: blank, l1, blank, l2, ..., lL, blank.
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK as usize);
    for &t in target.tokens() {
        ext.push(t as usize);
        ext.push(BLANK as usize);
    }
    let states = ext.len();
    // A skip s-2 -> s is allowed into non-blank states whose label differs.
    let can_skip: Vec<bool> = (0..states)
        .map(|s| s >= 2 && ext[s] != BLANK as usize && ext[s] != ext[s - 2])
        .collect();

    let mut alpha = Array2::from_elem((frames, states), LOG_ZERO);
    alpha[[0, 0]] = logprobs[[0, ext[0]]];
    alpha[[0, 1]] = logprobs[[0, ext[1]]];
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_add(acc, alpha[[t - 1, s - 1]]);
            }
            if can_skip[s] {
                acc = log_add(acc, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = if acc <= LOG_ZERO {
                LOG_ZERO
            } else {
                acc + logprobs[[t, ext[s]]]
            };
        }
    }

    let mut beta = Array2::from_elem((frames, states), LOG_ZERO);
    let last = frames - 1;
    beta[[last, states - 1]] = logprobs[[last, ext[states - 1]]];
    beta[[last, states - 2]] = logprobs[[last, ext[states - 2]]];
    for t in (0..last).rev() {
        for s in 0..states {
            let mut acc = beta[[t + 1, s]];
            if s + 1 < states {
                acc = log_add(acc, beta[[t + 1, s + 1]]);
            }
            if s + 2 < states && can_skip[s + 2] {
                acc = log_add(acc, beta[[t + 1, s + 2]]);
            }
            beta[[t, s]] = if acc <= LOG_ZERO {
                LOG_ZERO
            } else {
                acc + logprobs[[t, ext[s]]]
            };
        }
    }

    let log_likelihood = log_add(alpha[[last, states - 1]], alpha[[last, states - 2]]);
    if log_likelihood <= LOG_ZERO {
        return Err(Error::CtcInfeasible { required, frames });
    }

    let mut grad = Array2::zeros((frames, alphabet));
    for t in 0..frames {
        for s in 0..states {
            let a = alpha[[t, s]];
            let b = beta[[t, s]];
            if a <= LOG_ZERO || b <= LOG_ZERO {
                continue;
            }
            // alpha and beta both include the emission at t.
            let occupancy = (a + b - logprobs[[t, ext[s]]] - log_likelihood).exp();
            grad[[t, ext[s]]] -= occupancy;
        }
    }
    Ok((-log_likelihood, grad))
}

/// Per-frame argmax (ties resolve to the lower id), repeats collapsed, blanks
/// removed.
pub fn greedy_decode(logprobs: ArrayView2<'_, f64>) -> Transcript {
    let mut tokens = Vec::new();
    let mut prev = usize::MAX;
    for row in logprobs.rows() {
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        if best != prev && best != BLANK as usize {
            tokens.push(best as u16);
        }
        prev = best;
    }
    Transcript { tokens }
}
