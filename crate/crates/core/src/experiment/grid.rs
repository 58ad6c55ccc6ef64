use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dense::OpenRun;
use super::{MethodName, RunConfig};
use crate::checkpoint::{read_checkpoint, sha256_hex, write_checkpoint};
use crate::nn::{evaluate, EpochStats, ModelState, NoopObserver, TrainObserver, TrainRun};
use crate::prune::{
    effective_param_count, iterative_prune, naive_prune, one_shot_prune, round_targets, save_mask, Provenance,
    PruneMask, PruneMethod, RecoveryContext, Sparsity, SparseModel,
};
use crate::{Error, Result};

const REPORT_HEADER: &str = "method,recovery,sparsity,rewind_epoch,round,test_wer,nonzero_params,wall_seconds";
const SPARSITY_TOL: f64 = 1e-9;

/// One evaluated `(method, sparsity)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    /// Column label, e.g. `iter-lrr`, or `rewind` for ablation cells.
    pub label: String,
    pub method: String,
    pub recovery: String,
    pub sparsity: f64,
    pub rewind_epoch: Option<u32>,
    pub round: Option<u32>,
    pub test_wer: f64,
    pub nonzero_params: usize,
    pub total_params: usize,
    pub wall_seconds: f64,
}

impl CellRecord {
    fn csv_row(&self) -> String {
        let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.method,
            self.recovery,
            self.sparsity,
            opt(self.rewind_epoch),
            opt(self.round),
            self.test_wer,
            self.nonzero_params,
            self.wall_seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub label: String,
    pub sparsity: f64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct GridOutcome {
    /// Completed cells in grid order.
    pub records: Vec<CellRecord>,
    pub failures: Vec<CellFailure>,
}

impl GridOutcome {
    pub fn find(&self, label: &str, sparsity: f64) -> Option<&CellRecord> {
        self.records
            .iter()
            .find(|r| r.label == label && (r.sparsity - sparsity).abs() < SPARSITY_TOL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CellSpec {
    pub label: String,
    pub method: PruneMethod,
    pub sparsity: f64,
}

#[derive(Serialize)]
struct CellKey<'a> {
    run_id: &'a str,
    label: &'a str,
    method: &'a PruneMethod,
    sparsity: f64,
    finetune_epochs: u32,
    finetune_lr: f64,
}

impl CellSpec {
    fn digest(&self, cfg: &RunConfig, run_id: &str) -> String {
        let key = CellKey {
            run_id,
            label: &self.label,
            method: &self.method,
            sparsity: self.sparsity,
            finetune_epochs: cfg.prune.finetune_epochs,
            finetune_lr: cfg.prune.finetune_lr,
        };
        sha256_hex(serde_json::to_string(&key).expect("cell key serializes").as_bytes())[..16].to_string()
    }
}

fn method_fields(method: &PruneMethod) -> (&'static str, &'static str, Option<u32>) {
    match method {
        PruneMethod::Naive => ("naive", "none", None),
        PruneMethod::OneShot { recovery, rewind_epoch } => ("one-shot", recovery.code(), Some(*rewind_epoch)),
        PruneMethod::Iterative { recovery, .. } => ("iterative", recovery.code(), None),
    }
}

/// Output locations of one dense run's pruning cells.
pub(crate) struct CellStore {
    run_id: String,
    run_dir: PathBuf,
    cells_dir: PathBuf,
    report_lock: Mutex<()>,
}

impl CellStore {
    pub fn new(run: &OpenRun) -> Result<Self> {
        let cells_dir = run.dir.join("cells");
        fs::create_dir_all(&cells_dir)?;
        Ok(Self {
            run_id: run.summary.run_id.clone(),
            run_dir: run.dir.clone(),
            cells_dir,
            report_lock: Mutex::new(()),
        })
    }

    fn base(&self, digest: &str) -> PathBuf {
        self.cells_dir.join(digest)
    }

    pub fn cached(&self, cfg: &RunConfig, cell: &CellSpec) -> Result<Option<CellRecord>> {
        let path = self.base(&cell.digest(cfg, &self.run_id)).with_extension("json");
        if !path.exists() {
            return Ok(None);
        }
        let raw = fs::read_to_string(&path)?;
        serde_json::from_str(&raw)
            .map(Some)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn checkpoint_path(&self, cfg: &RunConfig, cell: &CellSpec) -> PathBuf {
        self.base(&cell.digest(cfg, &self.run_id)).with_extension("ckpt")
    }

    /// Writes the model, mask and record of a cell (record last) and
    /// appends the record to the run's report.
    fn persist(&self, cfg: &RunConfig, cell: &CellSpec, record: &CellRecord, model: &SparseModel) -> Result<()> {
        let base = self.base(&cell.digest(cfg, &self.run_id));
        if base.with_extension("json").exists() {
            return Ok(());
        }
        write_checkpoint(&base.with_extension("ckpt"), &self.run_id, &model.state)?;
        save_mask(&base.with_extension("mask"), &model.mask)?;
        let json = serde_json::to_string_pretty(record).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(base.with_extension("json"), json)?;
        let _guard = self.report_lock.lock().unwrap_or_else(|e| e.into_inner());
        append_report(&self.run_dir.join("report.csv"), record)
    }
}

fn append_report(path: &Path, record: &CellRecord) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{REPORT_HEADER}")?;
    }
    writeln!(f, "{}", record.csv_row())?;
    Ok(())
}

enum Unit {
    Single(CellSpec),
    /// One iterative run whose rounds produce every listed cell.
    Chain { target: f64, cells: Vec<CellSpec> },
}

fn plan_units(cfg: &RunConfig, pending: Vec<CellSpec>) -> Result<Vec<Unit>> {
    let mut units = Vec::new();
    let mut chains: BTreeMap<String, Vec<CellSpec>> = BTreeMap::new();
    for cell in pending {
        match cell.method {
            PruneMethod::Iterative { .. } if cell.sparsity > 0.0 => {
                chains.entry(cell.label.clone()).or_default().push(cell)
            }
            _ => units.push(Unit::Single(cell)),
        }
    }
    for (_, mut cells) in chains {
        while !cells.is_empty() {
            let target = cells.iter().map(|c| c.sparsity).fold(0.0, f64::max);
            let rounds = round_targets(Sparsity::new(target)?, cfg.prune.rounds, cfg.prune.iterative_schedule)
                .unwrap_or_default();
            let (covered, rest): (Vec<_>, Vec<_>) = cells.into_iter().partition(|c| {
                (c.sparsity - target).abs() < SPARSITY_TOL
                    || rounds.iter().any(|r| (r.value() - c.sparsity).abs() < SPARSITY_TOL)
            });
            units.push(Unit::Chain { target, cells: covered });
            cells = rest;
        }
    }
    Ok(units)
}

struct Env<'a> {
    cfg: &'a RunConfig,
    run: &'a OpenRun,
    store: &'a CellStore,
}

impl Env<'_> {
    fn ctx(&self) -> RecoveryContext<'_> {
        RecoveryContext {
            run: TrainRun {
                schedule: &self.cfg.schedule,
                data: &self.run.train,
                shuffle_seed: self.cfg.seed,
                word_separator: self.cfg.data.word_separator_token,
                augment: self.run.augment.as_ref(),
            },
            finetune_epochs: self.cfg.prune.finetune_epochs,
            finetune_lr: self.cfg.prune.finetune_lr,
        }
    }

    fn record(&self, cell: &CellSpec, model: &SparseModel, wall_seconds: f64) -> Result<CellRecord> {
        let (method, recovery, rewind_epoch) = method_fields(&cell.method);
        let (total, nonzero) = effective_param_count(&model.state, &model.mask)?;
        Ok(CellRecord {
            label: cell.label.clone(),
            method: method.to_string(),
            recovery: recovery.to_string(),
            sparsity: cell.sparsity,
            rewind_epoch,
            round: model.provenance.round,
            test_wer: evaluate(&model.state, &self.run.test, self.cfg.data.word_separator_token)?.percent(),
            nonzero_params: nonzero,
            total_params: total,
            wall_seconds,
        })
    }

    fn single(&self, cell: &CellSpec) -> Result<SparseModel> {
        let dense = self.run.dense_final()?;
        let target = Sparsity::new(cell.sparsity)?;
        let source = &self.run.summary.run_id;
        if cell.sparsity == 0.0 {
            return Ok(SparseModel {
                mask: PruneMask::ones(&dense),
                state: dense,
                provenance: Provenance {
                    method: cell.method,
                    target,
                    source_run: source.clone(),
                    round: None,
                },
            });
        }
        match cell.method {
            PruneMethod::Naive => naive_prune(&dense, target, source),
            PruneMethod::OneShot { recovery, rewind_epoch } => one_shot_prune(
                &self.run.store,
                source,
                target,
                recovery,
                rewind_epoch,
                &self.ctx(),
                &mut NoopObserver,
            ),
            PruneMethod::Iterative { .. } => Err(Error::InvalidInput("iterative cells run as chains".into())),
        }
    }

    fn execute(&self, unit: &Unit) -> Vec<(CellSpec, Result<CellRecord>)> {
        match unit {
            Unit::Single(cell) => {
                let t = Instant::now();
                let result = self.single(cell).and_then(|model| {
                    let record = self.record(cell, &model, t.elapsed().as_secs_f64())?;
                    self.store.persist(self.cfg, cell, &record, &model)?;
                    Ok(record)
                });
                vec![(cell.clone(), result)]
            }
            Unit::Chain { target, cells } => {
                let PruneMethod::Iterative {
                    rounds,
                    recovery,
                    schedule,
                    round_epochs,
                } = cells[0].method
                else {
                    unreachable!("chains hold iterative cells")
                };
                let mut timer = RoundTimer {
                    start: Instant::now(),
                    round_epochs,
                    ends: Vec::new(),
                };
                let chain = Sparsity::new(*target).and_then(|target| {
                    iterative_prune(
                        &self.run.store,
                        &self.run.summary.run_id,
                        target,
                        recovery,
                        rounds,
                        schedule,
                        round_epochs,
                        &self.ctx(),
                        &mut timer,
                    )
                });
                let models = match chain {
                    Ok(m) => m,
                    Err(e) => {
                        let msg = e.to_string();
                        return cells
                            .iter()
                            .map(|c| (c.clone(), Err(Error::InvalidInput(msg.clone()))))
                            .collect();
                    }
                };
                let total = timer.start.elapsed().as_secs_f64();
                cells
                    .iter()
                    .map(|cell| {
                        let found = models
                            .iter()
                            .position(|m| (m.provenance.target.value() - cell.sparsity).abs() < SPARSITY_TOL);
                        let result = match found {
                            Some(i) => {
                                let wall = timer.ends.get(i).copied().unwrap_or(total);
                                self.record(cell, &models[i], wall).and_then(|record| {
                                    self.store.persist(self.cfg, cell, &record, &models[i])?;
                                    Ok(record)
                                })
                            }
                            None => Err(Error::InvalidInput(format!(
                                "sparsity {} is not reached by any round",
                                cell.sparsity
                            ))),
                        };
                        (cell.clone(), result)
                    })
                    .collect()
            }
        }
    }
}

/// Records cumulative wall time at the end of every iterative round.
struct RoundTimer {
    start: Instant,
    round_epochs: u32,
    ends: Vec<f64>,
}

impl TrainObserver for RoundTimer {
    fn after_epoch(&mut self, _state: &ModelState, stats: &EpochStats) -> Result<()> {
        if stats.epoch == self.round_epochs {
            self.ends.push(self.start.elapsed().as_secs_f64());
        }
        Ok(())
    }
}

/// Runs (or loads from cache) every cell, up to `jobs` at a time.
pub(crate) fn run_cells(cfg: &RunConfig, run: &OpenRun, cells: &[CellSpec], jobs: usize) -> Result<GridOutcome> {
    let store = CellStore::new(run)?;
    let mut done: Vec<Option<CellRecord>> = Vec::with_capacity(cells.len());
    let mut pending = Vec::new();
    for cell in cells {
        let cached = store.cached(cfg, cell)?;
        if cached.is_none() {
            pending.push(cell.clone());
        }
        done.push(cached);
    }
    let units = plan_units(cfg, pending)?;
    let env = Env {
        cfg,
        run,
        store: &store,
    };
    let results = Mutex::new(Vec::new());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| {
        units.par_iter().for_each(|unit| {
            let out = env.execute(unit);
            results.lock().unwrap_or_else(|e| e.into_inner()).extend(out);
        })
    });
    let mut outcome = GridOutcome::default();
    let mut fresh = results.into_inner().unwrap_or_else(|e| e.into_inner());
    for (cell, cached) in cells.iter().zip(done) {
        if let Some(record) = cached {
            outcome.records.push(record);
            continue;
        }
        let Some(pos) = fresh.iter().position(|(c, _)| c == cell) else {
            continue;
        };
        match fresh.swap_remove(pos).1 {
            Ok(record) => outcome.records.push(record),
            Err(e) => outcome.failures.push(CellFailure {
                label: cell.label.clone(),
                sparsity: cell.sparsity,
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

fn compare_cells(cfg: &RunConfig, sparsities: &[f64], methods: &[MethodName]) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for &s in sparsities {
        for &m in methods {
            cells.push(CellSpec {
                label: m.label().to_string(),
                method: m.method(&cfg.prune, cfg.schedule.total_epochs),
                sparsity: s,
            });
        }
    }
    cells
}

/// Evaluates `methods × sparsities` on the held-out test set, writing
/// `report.csv` rows and a `compare.md` table into the run directory.
pub fn cmd_compare_methods(
    cfg: &RunConfig,
    run_id: &str,
    sparsities: &[f64],
    methods: &[MethodName],
    jobs: usize,
) -> Result<GridOutcome> {
    cfg.validate()?;
    super::config::check_grid("sparsities", sparsities)?;
    let run = OpenRun::open(cfg, run_id)?;
    let outcome = run_cells(cfg, &run, &compare_cells(cfg, sparsities, methods), jobs)?;
    fs::write(run.dir.join("compare.md"), markdown_table(&outcome, sparsities, methods))?;
    Ok(outcome)
}

/// Loads the pruned model of one comparison cell, computing it if needed.
pub(crate) fn compare_cell_model(
    cfg: &RunConfig,
    run: &OpenRun,
    method: MethodName,
    sparsity: f64,
) -> Result<ModelState> {
    let cells = compare_cells(cfg, &[sparsity], &[method]);
    let outcome = run_cells(cfg, run, &cells, 1)?;
    if let Some(f) = outcome.failures.first() {
        return Err(Error::InvalidInput(format!("{}@{}: {}", f.label, f.sparsity, f.message)));
    }
    let store = CellStore::new(run)?;
    Ok(read_checkpoint(&store.checkpoint_path(cfg, &cells[0]))?.1)
}

/// Rows = sparsity, columns = methods; each entry is `WER (nonzero params)`.
pub fn markdown_table(outcome: &GridOutcome, sparsities: &[f64], methods: &[MethodName]) -> String {
    let mut s = String::from("WER % (nonzero parameters)\n\n| Sp |");
    for m in methods {
        let _ = write!(s, " {m} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(methods.len()));
    s.push('\n');
    for &sp in sparsities {
        let _ = write!(s, "| {}% |", (sp * 100.0).round());
        for m in methods {
            match outcome.find(m.label(), sp) {
                Some(r) => {
                    let _ = write!(s, " {:.2} ({}) |", r.test_wer, r.nonzero_params);
                }
                None => s.push_str(" failed |"),
            }
        }
        s.push('\n');
    }
    s
}

/// Nearest stored epoch to `requested`; ties go to the earlier epoch.
pub fn nearest_epoch(stored: &[u32], requested: u32) -> Option<u32> {
    stored.iter().copied().min_by_key(|&e| (e.abs_diff(requested), e))
}

/// One point of the rewind ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationPoint {
    pub sparsity: f64,
    pub rewind_epoch: u32,
    pub test_wer: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AblationOutcome {
    pub points: Vec<AblationPoint>,
    pub failures: Vec<CellFailure>,
}

/// One-shot pruning with generalized rewinding for every
/// `(sparsity, epoch)`; each requested epoch is snapped to the nearest
/// stored snapshot. Writes `ablation.csv` into the run directory.
pub fn cmd_ablate_rewind(
    cfg: &RunConfig,
    run_id: &str,
    sparsities: &[f64],
    epochs: &[u32],
    jobs: usize,
) -> Result<AblationOutcome> {
    cfg.validate()?;
    super::config::check_grid("sparsities", sparsities)?;
    let run = OpenRun::open(cfg, run_id)?;
    let stored = crate::prune::SnapshotSource::epochs(&run.store);
    let mut cells = Vec::new();
    for &s in sparsities {
        for &e in epochs {
            let t = nearest_epoch(&stored, e).ok_or_else(|| Error::InvalidInput("no snapshots stored".into()))?;
            cells.push(CellSpec {
                label: "rewind".into(),
                method: PruneMethod::OneShot {
                    recovery: crate::prune::Recovery::Lrr,
                    rewind_epoch: t,
                },
                sparsity: s,
            });
        }
    }
    let outcome = run_cells(cfg, &run, &cells, jobs)?;
    let mut csv = String::from("sparsity,rewind_epoch,wer\n");
    let mut points = Vec::new();
    for cell in &cells {
        let PruneMethod::OneShot { rewind_epoch, .. } = cell.method else {
            continue;
        };
        let hit = outcome.records.iter().find(|r| {
            (r.sparsity - cell.sparsity).abs() < SPARSITY_TOL && r.rewind_epoch == Some(rewind_epoch)
        });
        if let Some(r) = hit {
            let _ = writeln!(csv, "{},{},{}", cell.sparsity, rewind_epoch, r.test_wer);
            points.push(AblationPoint {
                sparsity: cell.sparsity,
                rewind_epoch,
                test_wer: r.test_wer,
            });
        }
    }
    fs::write(run.dir.join("ablation.csv"), csv)?;
    Ok(AblationOutcome {
        points,
        failures: outcome.failures,
    })
}
