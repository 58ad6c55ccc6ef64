use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::dense::OpenRun;
use super::grid::compare_cell_model;
use super::{MethodName, RunConfig};
use crate::data::Sample;
use crate::nn::{evaluate, ModelState};
use crate::noise::{corrupt, NoiseKind, NoiseSpec, MAX_LEVEL};
use crate::sparse::{bench, bench_csv, BenchReport};
use crate::{rng, Error, Result};

/// A model selector for noise evaluation: the dense model or a
/// comparison cell such as `iter-lrr@0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelRef {
    Dense,
    Pruned { method: MethodName, sparsity: f64 },
}

impl fmt::Display for ModelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRef::Dense => f.write_str("dense"),
            ModelRef::Pruned { method, sparsity } => write!(f, "{method}@{sparsity}"),
        }
    }
}

impl FromStr for ModelRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "dense" {
            return Ok(ModelRef::Dense);
        }
        let (method, sp) = s
            .split_once('@')
            .ok_or_else(|| Error::InvalidInput(format!("model `{s}`: expected `dense` or `<method>@<sparsity>`")))?;
        let sparsity = match sp.strip_suffix('%') {
            Some(pct) => pct.parse::<f64>().map(|v| v / 100.0),
            None => sp.parse::<f64>(),
        }
        .map_err(|_| Error::InvalidInput(format!("model `{s}`: bad sparsity `{sp}`")))?;
        if !(0.0..1.0).contains(&sparsity) {
            return Err(Error::InvalidInput(format!("model `{s}`: sparsity outside [0, 1)")));
        }
        Ok(ModelRef::Pruned {
            method: method.parse()?,
            sparsity,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub model: String,
    pub kind: NoiseKind,
    pub level: u8,
    pub wer: f64,
}

/// Corrupts every test sample with `spec`; sample `i` uses its own seed so
/// all models see the same corrupted set.
pub fn corrupt_set(cfg: &RunConfig, samples: &[Sample], spec: NoiseSpec) -> Vec<Sample> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| Sample {
            features: corrupt(&s.features, spec, rng::mix(&[cfg.seed, 0x7E57, i as u64]), &cfg.severity),
            transcript: s.transcript.clone(),
        })
        .collect()
}

fn resolve(cfg: &RunConfig, run: &OpenRun, model: ModelRef) -> Result<ModelState> {
    match model {
        ModelRef::Dense => run.dense_final(),
        ModelRef::Pruned { method, sparsity } => compare_cell_model(cfg, run, method, sparsity),
    }
}

/// WER of each model on the test set corrupted by every `(kind, level)`.
/// Writes `noise.csv` (model, kind, level, wer) into the run directory.
pub fn cmd_eval_noise(
    cfg: &RunConfig,
    run_id: &str,
    models: &[ModelRef],
    kinds: &[NoiseKind],
    levels: &[u8],
) -> Result<Vec<NoiseRow>> {
    cfg.validate()?;
    if let Some(&l) = levels.iter().find(|&&l| l > MAX_LEVEL) {
        return Err(Error::InvalidInput(format!("noise level {l} above {MAX_LEVEL}")));
    }
    let run = OpenRun::open(cfg, run_id)?;
    let states = models
        .iter()
        .map(|&m| resolve(cfg, &run, m).map(|s| (m.to_string(), s)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &kind in kinds {
        for &level in levels {
            let spec = if kind == NoiseKind::Clean {
                NoiseSpec::new(kind, 0)?
            } else {
                NoiseSpec::new(kind, level)?
            };
            let set = corrupt_set(cfg, &run.test, spec);
            for (name, state) in &states {
                rows.push(NoiseRow {
                    model: name.clone(),
                    kind,
                    level,
                    wer: evaluate(state, &set, cfg.data.word_separator_token)?.percent(),
                });
            }
        }
    }
    let mut csv = String::from("model,kind,level,wer\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.model, r.kind, r.level, r.wer);
    }
    fs::write(run.dir.join("noise.csv"), csv)?;
    Ok(rows)
}

/// Runs the CSR benchmark and writes its CSV to `out`.
pub fn cmd_bench_sparse(
    sizes: &[usize],
    sparsities: &[f64],
    repetitions: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<BenchReport>> {
    let reports = bench(sizes, sparsities, repetitions, seed)?;
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, bench_csv(&reports))?;
    Ok(reports)
}
