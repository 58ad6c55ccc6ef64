use serde::{Deserialize, Serialize};

use crate::nn::ModelState;
use crate::{Error, Result};

/// Target fraction of prunable weights set to zero, in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Sparsity(f64);

impl Sparsity {
    pub const ZERO: Sparsity = Sparsity(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&value) {
            return Err(Error::InvalidInput(format!("sparsity {value} outside [0, 1)")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `⌊value · prunable⌋`. The tiny guard absorbs representation error
    /// of decimal fractions (`0.3 · 10` must give 3).
    pub fn prune_count(self, prunable: usize) -> usize {
        ((self.0 * prunable as f64) + 1e-9).floor() as usize
    }
}

impl TryFrom<f64> for Sparsity {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Sparsity::new(v)
    }
}

impl From<Sparsity> for f64 {
    fn from(s: Sparsity) -> f64 {
        s.0
    }
}

/// Keep-flags for one prunable tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub keep: Vec<bool>,
}

impl MaskTensor {
    pub fn zeros(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }
}

/// Binary mask over exactly the prunable tensors of a model; `false` marks
/// a pruned weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    tensors: Vec<MaskTensor>,
}

impl PruneMask {
    /// All-ones mask for `state`.
    pub fn ones(state: &ModelState) -> Self {
        Self {
            tensors: state
                .params
                .iter()
                .filter(|p| p.prunable)
                .map(|p| MaskTensor {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    keep: vec![true; p.len()],
                })
                .collect(),
        }
    }

    /// Builds a mask from explicit tensors. Shapes are checked at use.
    pub fn from_tensors(tensors: Vec<MaskTensor>) -> Result<Self> {
        for t in &tensors {
            if t.keep.len() != t.shape.iter().product::<usize>() {
                return Err(Error::Shape(format!("mask {} length does not match shape {:?}", t.name, t.shape)));
            }
        }
        Ok(Self { tensors })
    }

    pub fn tensors(&self) -> &[MaskTensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&MaskTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Errors unless the mask covers exactly the prunable tensors of
    /// `state`, in order and with matching shapes.
    pub fn check_matches(&self, state: &ModelState) -> Result<()> {
        let prunable: Vec<_> = state.params.iter().filter(|p| p.prunable).collect();
        if prunable.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "mask covers {} tensors, model has {} prunable tensors",
                self.tensors.len(),
                prunable.len()
            )));
        }
        for (m, p) in self.tensors.iter().zip(prunable) {
            if m.name != p.name || m.shape != p.shape {
                return Err(Error::Shape(format!(
                    "mask tensor {} {:?} does not match parameter {} {:?}",
                    m.name, m.shape, p.name, p.shape
                )));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.tensors.iter().map(|t| t.keep.len()).sum()
    }

    pub fn zeros(&self) -> usize {
        self.tensors.iter().map(MaskTensor::zeros).sum()
    }

    pub fn ones_count(&self) -> usize {
        self.total() - self.zeros()
    }

    /// True when every zero of `self` is also a zero of `later`.
    pub fn nested_in(&self, later: &PruneMask) -> bool {
        self.tensors.len() == later.tensors.len()
            && self.tensors.iter().zip(&later.tensors).all(|(a, b)| {
                a.keep.len() == b.keep.len() && a.keep.iter().zip(&b.keep).all(|(&ka, &kb)| ka || !kb)
            })
    }

    /// Per-parameter multipliers aligned with `state.params`; `None` for
    /// unprunable tensors.
    pub(crate) fn multipliers(&self, state: &ModelState) -> Result<Vec<Option<Vec<f64>>>> {
        self.check_matches(state)?;
        let mut it = self.tensors.iter();
        Ok(state
            .params
            .iter()
            .map(|p| {
                if p.prunable {
                    let m = it.next().expect("checked above");
                    Some(m.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect())
                } else {
                    None
                }
            })
            .collect())
    }
}

/// Exact zero fraction over prunable entries. An all-zero mask gives 1.
pub fn sparsity_of(mask: &PruneMask) -> f64 {
    let total = mask.total();
    if total == 0 {
        0.0
    } else {
        mask.zeros() as f64 / total as f64
    }
}

/// Unstructured global magnitude mask.
///
/// Prunes exactly `⌊target · p_prunable⌋` weights across all prunable tensors
/// jointly. Zeros of `existing` stay zero; the remaining budget goes to the
/// smallest magnitudes, ties broken by `(tensor order, flat index)`
/// ascending.
pub fn global_magnitude_mask(state: &ModelState, target: Sparsity, existing: Option<&PruneMask>) -> Result<PruneMask> {
    let mut mask = match existing {
        Some(m) => {
            m.check_matches(state)?;
            m.clone()
        }
        None => PruneMask::ones(state),
    };
    let want = target.prune_count(mask.total());
    let already = mask.zeros();
    if already > want {
        return Err(Error::InvalidInput(format!(
            "target sparsity {} is below the existing mask's sparsity {}",
            target.value(),
            sparsity_of(&mask)
        )));
    }
    let extra = want - already;
    if extra == 0 {
        return Ok(mask);
    }

    let mut candidates: Vec<(f32, u32, u32)> = Vec::with_capacity(mask.ones_count());
    for (ti, (m, p)) in mask
        .tensors
        .iter()
        .zip(state.params.iter().filter(|p| p.prunable))
        .enumerate()
    {
        for (i, (&keep, &v)) in m.keep.iter().zip(&p.values).enumerate() {
            if keep {
                candidates.push((v.abs(), ti as u32, i as u32));
            }
        }
    }
    let order = |a: &(f32, u32, u32), b: &(f32, u32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2));
    if extra < candidates.len() {
        candidates.select_nth_unstable_by(extra - 1, order);
    }
    for &(_, ti, i) in &candidates[..extra] {
        mask.tensors[ti as usize].keep[i as usize] = false;
    }
    Ok(mask)
}

/// `m ⊙ θ` on prunable tensors; pruned entries become `+0.0`.
pub fn apply_mask(state: &ModelState, mask: &PruneMask) -> Result<ModelState> {
    mask.check_matches(state)?;
    let mut out = state.clone();
    let mut it = mask.tensors.iter();
    for p in out.params.iter_mut().filter(|p| p.prunable) {
        let m = it.next().expect("checked above");
        for (v, &keep) in p.values.iter_mut().zip(&m.keep) {
            if !keep {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

/// `(total, nonzero)` parameter counts where nonzero counts every
/// unprunable parameter plus the kept prunable ones.
pub fn effective_param_count(state: &ModelState, mask: &PruneMask) -> Result<(usize, usize)> {
    mask.check_matches(state)?;
    let total = state.param_count();
    let unprunable = total - state.prunable_count();
    Ok((total, unprunable + mask.ones_count()))
}
