//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use ndarray::Array2;
use prunelab::ctc::BLANK;
use prunelab::nn::{ModelConfig, ModelState, ParamTensor};
use prunelab::prune::PruneMask;
use prunelab::rng::{self, Rng};
use rand::Rng as _;

/// Collapses a frame-level path: merge repeats, then drop blanks.
pub fn collapse(path: &[u16]) -> Vec<u16> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != BLANK {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// `P(target | logprobs)` by summing over every frame-level path.
pub fn ctc_path_sum(lp: &Array2<f64>, target: &[u16]) -> f64 {
    let (t, a) = lp.dim();
    let mut total = 0.0;
    let mut path = vec![0u16; t];
    let count = a.pow(t as u32);
    for code in 0..count {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = (c % a) as u16;
            c /= a;
        }
        if collapse(&path) == target {
            total += path.iter().enumerate().map(|(i, &k)| lp[[i, k as usize]]).sum::<f64>().exp();
        }
    }
    total
}

/// Row-wise log-softmax of random logits.
pub fn random_logprobs(rng: &mut Rng, frames: usize, alphabet: usize, scale: f64) -> Array2<f64> {
    let mut lp = Array2::from_shape_fn((frames, alphabet), |_| rng.random_range(-scale..scale));
    for mut row in lp.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    lp
}

/// Every sequence over `0..alphabet` of length `0..=max_len`.
pub fn all_sequences(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Edit distances from `source` to every string of length `<= max_len`,
/// found by breadth-first search over single insert/delete/substitute
/// moves.
pub fn edit_distances_bfs(source: &[u8], alphabet: u8, max_len: usize) -> HashMap<Vec<u8>, usize> {
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(source.to_vec(), 0);
    queue.push_back(source.to_vec());
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        let mut neighbours = Vec::new();
        for i in 0..s.len() {
            let mut t = s.clone();
            t.remove(i);
            neighbours.push(t);
            for c in 0..alphabet {
                if c != s[i] {
                    let mut t = s.clone();
                    t[i] = c;
                    neighbours.push(t);
                }
            }
        }
        if s.len() < max_len {
            for i in 0..=s.len() {
                for c in 0..alphabet {
                    let mut t = s.clone();
                    t.insert(i, c);
                    neighbours.push(t);
                }
            }
        }
        for t in neighbours {
            if !dist.contains_key(&t) {
                dist.insert(t.clone(), d + 1);
                queue.push_back(t);
            }
        }
    }
    dist
}

/// Model state of `cfg` filled with random values; with `ties > 0`
/// magnitudes are drawn from `ties` distinct levels so many weights tie.
pub fn random_state(cfg: &ModelConfig, seed: u64, ties: u32) -> ModelState {
    let base = prunelab::nn::init_model(cfg, seed).unwrap();
    let mut rng = rng::stream(seed, 77);
    let params = base
        .params
        .iter()
        .map(|p| {
            let values = p
                .values
                .iter()
                .map(|_| {
                    if ties > 0 {
                        let level = rng.random_range(0..ties) as f32;
                        if rng.random::<bool>() {
                            level
                        } else {
                            -level
                        }
                    } else {
                        rng.random_range(-1.0f32..1.0)
                    }
                })
                .collect();
            ParamTensor::new(p.name.clone(), p.shape.clone(), values, p.prunable).unwrap()
        })
        .collect();
    ModelState::from_parts(*cfg, 0, seed, params).unwrap()
}

/// Full-sort global magnitude mask: sort all prunable entries that are not
/// already pruned by `existing` by `(|w|, tensor, index)` and drop the first
/// `count - already_pruned`.
pub fn sort_oracle_mask(state: &ModelState, zeros: usize, existing: Option<&PruneMask>) -> Vec<Vec<bool>> {
    let prunable: Vec<&ParamTensor> = state.params.iter().filter(|p| p.prunable).collect();
    let mut keep: Vec<Vec<bool>> = prunable
        .iter()
        .map(|p| match existing.and_then(|m| m.get(&p.name)) {
            Some(m) => m.keep.clone(),
            None => vec![true; p.values.len()],
        })
        .collect();
    let already: usize = keep.iter().map(|k| k.iter().filter(|&&x| !x).count()).sum();
    let mut entries = Vec::new();
    for (ti, p) in prunable.iter().enumerate() {
        for (i, v) in p.values.iter().enumerate() {
            if keep[ti][i] {
                entries.push((v.abs(), ti, i));
            }
        }
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, ti, i) in entries.iter().take(zeros.saturating_sub(already)) {
        keep[ti][i] = false;
    }
    keep
}

/// Plain dense mat-vec over `keep`-masked weights.
pub fn masked_matvec(w: &Array2<f64>, keep: &Array2<bool>, x: &[f64]) -> Vec<f64> {
    (0..w.nrows())
        .map(|r| (0..w.ncols()).filter(|&c| keep[[r, c]]).map(|c| w[[r, c]] * x[c]).sum())
        .collect()
}
