//! Levenshtein alignment and word error rate.

use std::ops::AddAssign;

use crate::{Error, Result};

/// Error counts from one optimal alignment of a hypothesis to a reference.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WerScore {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_words: usize,
    pub wer: f64,
}

impl WerScore {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// WER in percent, the unit used by every report.
    pub fn percent(&self) -> f64 {
        100.0 * self.wer
    }

    fn refresh(&mut self) {
        self.wer = if self.reference_words == 0 {
            0.0
        } else {
            self.errors() as f64 / self.reference_words as f64
        };
    }
}

/// Corpus-level accumulation: counts add, the rate is recomputed.
impl AddAssign for WerScore {
    fn add_assign(&mut self, rhs: Self) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
        self.reference_words += rhs.reference_words;
        self.refresh();
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Op {
    Keep,
    Sub,
    Ins,
    Del,
}

fn distance_table<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<Vec<usize>> {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = diag.min(d[i][j - 1] + 1).min(d[i - 1][j] + 1);
        }
    }
    d
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    distance_table(a, b)[a.len()][b.len()]
}

/// Aligns `hypothesis` against a non-empty `reference`.
///
/// When several alignments are optimal the backtrace prefers a substitution,
/// then an insertion, then a deletion.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<WerScore> {
    if reference.is_empty() {
        return Err(Error::InvalidInput("WER reference must be non-empty".into()));
    }
    let d = distance_table(reference, hypothesis);
    let (mut i, mut j) = (reference.len(), hypothesis.len());
    let mut score = WerScore {
        reference_words: reference.len(),
        ..Default::default()
    };
    while i > 0 || j > 0 {
        let op = if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = d[i - 1][j - 1] + usize::from(!same);
            if d[i][j] == diag {
                if same {
                    Op::Keep
                } else {
                    Op::Sub
                }
            } else if d[i][j] == d[i][j - 1] + 1 {
                Op::Ins
            } else {
                Op::Del
            }
        } else if j > 0 {
            Op::Ins
        } else {
            Op::Del
        };
        match op {
            Op::Keep => {
                i -= 1;
                j -= 1;
            }
            Op::Sub => {
                score.substitutions += 1;
                i -= 1;
                j -= 1;
            }
            Op::Ins => {
                score.insertions += 1;
                j -= 1;
            }
            Op::Del => {
                score.deletions += 1;
                i -= 1;
            }
        }
    }
    score.refresh();
    Ok(score)
}

/// Splits a token stream into words on `separator`, dropping empty words.
pub fn words(tokens: &[u16], separator: u16) -> Vec<&[u16]> {
    tokens
        .split(|&t| t == separator)
        .filter(|w| !w.is_empty())
        .collect()
}

/// Word-level WER of two token streams sharing a separator token.
pub fn token_wer(reference: &[u16], hypothesis: &[u16], separator: u16) -> Result<WerScore> {
    wer(&words(reference, separator), &words(hypothesis, separator))
}
