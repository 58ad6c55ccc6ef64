//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Criteria 7 to 9 train the default model several times
//! and take a few minutes each on one core.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use ndarray::Array2;
use prunelab::checkpoint::{encode, read_checkpoint, SnapshotStore};
use prunelab::ctc::{ctc_loss, Transcript};
use prunelab::data::DatasetSpec;
use prunelab::experiment::{
    cmd_ablate_rewind, cmd_compare_methods, cmd_eval_noise, cmd_train_dense, MethodName, ModelRef, OpenRun,
    RunConfig,
};
use prunelab::nn::{init_model, ModelConfig, ModelState, TrainObserver, TrainRun, TrainSchedule};
use prunelab::noise::NoiseKind;
use prunelab::prune::{
    effective_param_count, global_magnitude_mask, iterative_prune, one_shot_prune, IterativeSchedule, PruneMask,
    Recovery, RecoveryContext, SnapshotSource, SparseModel, Sparsity,
};
use prunelab::rng;
use prunelab::sparse::{bench, spmv, to_csr};
use prunelab::wer::edit_distance;
use prunelab::Error;
use rand::Rng as _;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sp(v: f64) -> Sparsity {
    Sparsity::new(v).unwrap()
}

fn median3(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn keep_sets(mask: &PruneMask) -> Vec<Vec<bool>> {
    mask.tensors().iter().map(|t| t.keep.clone()).collect()
}

fn c1_mask_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(1, 1);
    let mut largest = 0;
    for i in 0..200u64 {
        let cfg = ModelConfig {
            feature_dim: r.random_range(1..=12),
            hidden_dim: r.random_range(2..=150),
            num_blocks: r.random_range(1..=2),
            alphabet_size: r.random_range(2..=13),
            conv_kernel: 3,
        };
        let ties = if i % 3 == 0 { r.random_range(2..20) } else { 0 };
        let state = random_state(&cfg, i, ties);
        let p = state.prunable_count();
        ensure(p <= 100_000, || format!("instance {i} has {p} weights"))?;
        largest = largest.max(p);
        let target = sp(r.random_range(0.0..0.99));
        let mask = global_magnitude_mask(&state, target, None).map_err(|e| e.to_string())?;
        let want = (target.value() * p as f64 + 1e-9).floor() as usize;
        ensure(mask.zeros() == want, || format!("instance {i}: {} zeros, expected {want}", mask.zeros()))?;
        ensure(keep_sets(&mask) == sort_oracle_mask(&state, want, None), || {
            format!("instance {i}: mask differs from full sort")
        })?;
        let prunable: Vec<_> = state.params.iter().filter(|p| p.prunable).collect();
        let mut max_pruned = 0.0f32;
        let mut min_kept = f32::INFINITY;
        for (t, m) in prunable.iter().zip(mask.tensors()) {
            for (v, &k) in t.values.iter().zip(&m.keep) {
                if k {
                    min_kept = min_kept.min(v.abs());
                } else {
                    max_pruned = max_pruned.max(v.abs());
                }
            }
        }
        ensure(want == 0 || want == p || max_pruned <= min_kept, || {
            format!("instance {i}: pruned magnitude {max_pruned} above kept {min_kept}")
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("200 instances up to {largest} weights in {secs:.2}s"))
}

/// Workspace-local tiny task for the recovery contract checks.
fn tiny(out: &Path, epochs: u32) -> RunConfig {
    let mut cfg = RunConfig {
        out_dir: out.to_path_buf(),
        model: ModelConfig {
            feature_dim: 6,
            hidden_dim: 8,
            num_blocks: 1,
            alphabet_size: 6,
            conv_kernel: 3,
        },
        schedule: TrainSchedule {
            total_epochs: epochs,
            warmup_epochs: 1,
            batch_frames_cap: 120,
            ..TrainSchedule::default()
        },
        data: DatasetSpec {
            num_samples: 40,
            alphabet_size: 5,
            word_separator_token: 5,
            words_per_transcript: (1, 3),
            tokens_per_word: (1, 2),
            frames_per_token: (2, 3),
            feature_dim: 6,
            ..DatasetSpec::default()
        },
        ..RunConfig::default()
    };
    cfg.split.train_fraction = 0.75;
    cfg.prune.finetune_epochs = epochs;
    cfg.prune.round_epochs = epochs;
    cfg.prune.finetune_lr = 1e-3;
    cfg
}

/// Every training phase's starting model plus every post-step model.
#[derive(Default)]
struct Recorder {
    phases: Vec<(ModelState, Vec<ModelState>)>,
}

impl TrainObserver for Recorder {
    fn on_start(&mut self, state: &ModelState) -> prunelab::Result<()> {
        self.phases.push((state.clone(), Vec::new()));
        Ok(())
    }

    fn after_step(&mut self, state: &ModelState) -> prunelab::Result<()> {
        self.phases.last_mut().expect("on_start runs first").1.push(state.clone());
        Ok(())
    }
}

enum Variant {
    OneShot(Recovery),
    Iterative(Recovery),
}

fn run_variant(open: &OpenRun, cfg: &RunConfig, v: &Variant) -> (Vec<SparseModel>, Recorder) {
    let run = TrainRun {
        schedule: &cfg.schedule,
        data: &open.train,
        shuffle_seed: cfg.seed,
        word_separator: cfg.data.word_separator_token,
        augment: None,
    };
    let ctx = RecoveryContext {
        run,
        finetune_epochs: cfg.prune.finetune_epochs,
        finetune_lr: cfg.prune.finetune_lr,
    };
    let total = cfg.schedule.total_epochs;
    let mut rec = Recorder::default();
    let out = match *v {
        Variant::OneShot(r) => {
            let rewind = if r == Recovery::Lth { 0 } else { total };
            vec![one_shot_prune(&open.store, "acc", sp(0.6), r, rewind, &ctx, &mut rec).unwrap()]
        }
        Variant::Iterative(r) => iterative_prune(
            &open.store,
            "acc",
            sp(0.6),
            r,
            3,
            IterativeSchedule::Linear,
            cfg.prune.round_epochs,
            &ctx,
            &mut rec,
        )
        .unwrap(),
    };
    (out, rec)
}

fn masked_zero(state: &ModelState, mask: &PruneMask) -> bool {
    state
        .params
        .iter()
        .filter(|p| p.prunable)
        .zip(mask.tensors())
        .all(|(p, m)| p.values.iter().zip(&m.keep).all(|(&v, &k)| k || v == 0.0))
}

fn c2_frozen(dir: &Path) -> Outcome {
    let cfg = tiny(dir, 5);
    let dense = cmd_train_dense(&cfg).map_err(|e| e.to_string())?;
    let open = OpenRun::open(&cfg, &dense.summary.run_id).map_err(|e| e.to_string())?;
    let variants = [
        ("finetune", Variant::OneShot(Recovery::Finetune)),
        ("lth", Variant::OneShot(Recovery::Lth)),
        ("lrr", Variant::OneShot(Recovery::Lrr)),
        ("iter-lth", Variant::Iterative(Recovery::Lth)),
        ("iter-lrr", Variant::Iterative(Recovery::Lrr)),
        ("parp", Variant::OneShot(Recovery::Parp)),
    ];
    let mut steps = 0;
    for (name, v) in &variants {
        let (models, rec) = run_variant(&open, &cfg, v);
        if matches!(v, Variant::OneShot(Recovery::Parp)) {
            let m = &models[0];
            ensure(masked_zero(&m.state, &m.mask), || "parp: final model not masked".into())?;
            ensure(m.mask.zeros() == sp(0.6).prune_count(m.mask.total()), || "parp: wrong final sparsity".into())?;
            continue;
        }
        ensure(rec.phases.len() == models.len(), || format!("{name}: {} phases", rec.phases.len()))?;
        for (k, ((start, states), model)) in rec.phases.iter().zip(&models).enumerate() {
            ensure(states.len() >= 5, || format!("{name} round {k}: only {} steps", states.len()))?;
            ensure(masked_zero(start, &model.mask), || format!("{name} round {k}: start not masked"))?;
            for (s, st) in states.iter().enumerate() {
                ensure(masked_zero(st, &model.mask), || format!("{name} round {k}: pruned weight moved at step {s}"))?;
            }
            steps += states.len();
        }
    }
    Ok(format!("{steps} optimizer steps over 5 recovery variants, all masked entries exactly 0"))
}

fn bit_equal_on_kept(start: &ModelState, source: &ModelState, mask: &PruneMask) -> bool {
    let mut masks = mask.tensors().iter();
    start.params.iter().zip(&source.params).all(|(a, b)| {
        let keep = if a.prunable { masks.next().map(|m| &m.keep) } else { None };
        a.values.iter().zip(&b.values).enumerate().all(|(i, (x, y))| match keep {
            Some(k) if !k[i] => x.to_bits() == 0,
            _ => x.to_bits() == y.to_bits(),
        })
    })
}

fn c3_rewind(dir: &Path) -> Outcome {
    let cfg = tiny(dir, 5);
    let dense = cmd_train_dense(&cfg).map_err(|e| e.to_string())?;
    let open = OpenRun::open(&cfg, &dense.summary.run_id).map_err(|e| e.to_string())?;
    let theta0 = open.store.load(0).map_err(|e| e.to_string())?;
    let theta_t = open.dense_final().map_err(|e| e.to_string())?;
    let cases = [
        ("lth", Variant::OneShot(Recovery::Lth), &theta0),
        ("lrr", Variant::OneShot(Recovery::Lrr), &theta_t),
        ("iter-lth", Variant::Iterative(Recovery::Lth), &theta0),
        ("iter-lrr", Variant::Iterative(Recovery::Lrr), &theta_t),
    ];
    for (name, v, source) in cases {
        let (models, rec) = run_variant(&open, &cfg, &v);
        let start = &rec.phases[0].0;
        ensure(bit_equal_on_kept(start, source, &models[0].mask), || {
            format!("{name}: start weights differ from the rewind source")
        })?;
        if let Variant::Iterative(r) = v {
            for k in 1..models.len() {
                let src = if r == Recovery::Lth { &theta0 } else { &models[k - 1].state };
                ensure(bit_equal_on_kept(&rec.phases[k].0, src, &models[k].mask), || {
                    format!("{name} round {}: start weights differ", k + 1)
                })?;
            }
        }
    }
    let store = SnapshotStore::open(&dense.dir.join("snapshots")).map_err(|e| e.to_string())?;
    let epochs = store.epochs();
    for &e in &epochs {
        let path = store.path_of(e).ok_or("snapshot path missing")?;
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        let (id, state) = read_checkpoint(&path).map_err(|e| e.to_string())?;
        ensure(encode(&id, &state) == bytes, || format!("snapshot {e} does not re-encode identically"))?;
        let via_store = store.load_snapshot(e).map_err(|e| e.to_string())?;
        ensure(encode(&id, &via_store) == bytes, || format!("snapshot {e} store load differs"))?;
    }
    Ok(format!(
        "LTH starts bit-equal theta_0, LRR bit-equal theta_T on kept entries; {} snapshots re-encode byte-identically",
        epochs.len()
    ))
}

fn c4_nesting() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tiny(dir.path(), 2);
    let dense = cmd_train_dense(&cfg).map_err(|e| e.to_string())?;
    let open = OpenRun::open(&cfg, &dense.summary.run_id).map_err(|e| e.to_string())?;
    let run = TrainRun {
        schedule: &cfg.schedule,
        data: &open.train,
        shuffle_seed: cfg.seed,
        word_separator: cfg.data.word_separator_token,
        augment: None,
    };
    let ctx = RecoveryContext {
        run,
        finetune_epochs: 1,
        finetune_lr: 1e-5,
    };
    let mut noop = prunelab::nn::NoopObserver;
    let rounds = iterative_prune(&open.store, "acc", sp(0.9), Recovery::Lrr, 10, IterativeSchedule::Linear, 1, &ctx, &mut noop)
        .map_err(|e| e.to_string())?;
    ensure(rounds.len() == 9, || format!("{} rounds", rounds.len()))?;
    let p = rounds[0].mask.total();
    for (k, m) in rounds.iter().enumerate() {
        let want = (k + 1) * p / 10;
        ensure(m.mask.zeros() == want, || format!("round {}: {} zeros, expected {want}", k + 1, m.mask.zeros()))?;
        ensure(m.provenance.target.value() == (k + 1) as f64 / 10.0, || {
            format!("round {} target {}", k + 1, m.provenance.target.value())
        })?;
        if k > 0 {
            ensure(rounds[k - 1].mask.nested_in(&m.mask), || format!("round {} not nested", k + 1))?;
        }
    }
    Ok(format!("r=10 reaches 90% in 9 nested rounds at 10%..90% over {p} prunable weights"))
}

fn c5_ctc() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(5, 5);
    let (mut checked, mut worst_loss, mut worst_grad) = (0, 0.0f64, 0.0f64);
    let h = 1e-5;
    while checked < 500 {
        let frames = r.random_range(1..=6);
        let alphabet = r.random_range(2..=4);
        let len = r.random_range(1..=3);
        let target: Vec<u16> = (0..len).map(|_| r.random_range(1..alphabet as u16)).collect();
        let mut lp = random_logprobs(&mut r, frames, alphabet, 2.0);
        let brute = ctc_path_sum(&lp, &target);
        let t = Transcript::new(target).unwrap();
        let (loss, grad) = match ctc_loss(lp.view(), &t) {
            Ok(v) => v,
            Err(Error::CtcInfeasible { .. }) => {
                ensure(brute == 0.0, || "infeasible target with nonzero path mass".into())?;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        worst_loss = worst_loss.max((loss + brute.ln()).abs());
        for i in 0..frames {
            for k in 0..alphabet {
                let orig = lp[[i, k]];
                lp[[i, k]] = orig + h;
                let up = ctc_loss(lp.view(), &t).unwrap().0;
                lp[[i, k]] = orig - h;
                let down = ctc_loss(lp.view(), &t).unwrap().0;
                lp[[i, k]] = orig;
                let fd = (up - down) / (2.0 * h);
                let g = grad[[i, k]];
                worst_grad = worst_grad.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
            }
        }
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst_loss < 1e-6, || format!("loss error {worst_loss:e}"))?;
    ensure(worst_grad < 1e-4, || format!("gradient relative error {worst_grad:e}"))?;
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{checked} instances, max loss error {worst_loss:.1e}, max grad rel error {worst_grad:.1e}, {secs:.2}s"
    ))
}

fn c6_wer() -> Outcome {
    let seqs = all_sequences(3, 6);
    let mut pairs = 0u64;
    for a in &seqs {
        let dist = edit_distances_bfs(a, 3, 6);
        for b in &seqs {
            let d = edit_distance(a, b);
            ensure(d == dist[b], || format!("{a:?} -> {b:?}: {d} vs {}", dist[b]))?;
            pairs += 1;
        }
    }
    Ok(format!("{pairs} pairs exact"))
}

fn seeded(out: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        out_dir: out.to_path_buf(),
        seed,
        ..RunConfig::default()
    };
    cfg.data.seed = seed;
    cfg
}

fn compare(cfg: &RunConfig, sparsities: &[f64], methods: &[MethodName]) -> Result<Vec<(MethodName, f64, f64)>, String> {
    let run = cmd_train_dense(cfg).map_err(|e| e.to_string())?;
    let outcome = cmd_compare_methods(cfg, &run.summary.run_id, sparsities, methods, 1).map_err(|e| e.to_string())?;
    if let Some(f) = outcome.failures.first() {
        return Err(format!("{}@{}: {}", f.label, f.sparsity, f.message));
    }
    let mut out = Vec::new();
    for &m in methods {
        for &s in sparsities {
            let rec = outcome.find(m.label(), s).ok_or_else(|| format!("{m}@{s} missing"))?;
            out.push((m, s, rec.test_wer));
        }
    }
    Ok(out)
}

fn c7_trend(out: &Path) -> Outcome {
    let cfg = seeded(out, 1);
    let dense = cmd_train_dense(&cfg).map_err(|e| e.to_string())?.summary.test_wer;
    let naive = compare(&cfg, &[0.5, 0.8], &[MethodName::Naive])?;
    let iter = compare(&cfg, &[0.5], &[MethodName::IterLrr])?;
    let (naive50, naive80, iter50) = (naive[0].2, naive[1].2, iter[0].2);
    let line = format!("dense {dense:.2}, naive@50% {naive50:.2}, naive@80% {naive80:.2}, iter-lrr@50% {iter50:.2}");
    ensure(naive80 - dense >= 20.0, || format!("(a) fails: {line}"))?;
    ensure(iter50 <= dense + 2.0, || format!("(b) fails: {line}"))?;
    ensure(iter50 <= naive50 - 10.0, || format!("(c) fails: {line}"))?;
    Ok(line)
}

/// The default dense model fits its training set: final-epoch train WER
/// below 5%.
fn learnability(out: &Path) -> Outcome {
    let run = cmd_train_dense(&seeded(out, 1)).map_err(|e| e.to_string())?;
    let telemetry = fs::read_to_string(run.dir.join("telemetry.csv")).map_err(|e| e.to_string())?;
    let last = telemetry.lines().last().ok_or("empty telemetry")?;
    let train_wer: f64 = last.rsplit(',').next().and_then(|v| v.parse().ok()).ok_or("bad telemetry row")?;
    ensure(train_wer < 5.0, || format!("final train WER {train_wer:.2}"))?;
    Ok(format!("final train WER {train_wer:.2}, test WER {:.2}", run.summary.test_wer))
}

fn c8_rewind(out: &Path) -> Outcome {
    let (mut at0, mut at_t) = (Vec::new(), Vec::new());
    for seed in 1..=3 {
        let cfg = seeded(out, seed);
        let t = cfg.schedule.total_epochs;
        let run = cmd_train_dense(&cfg).map_err(|e| e.to_string())?;
        let res = cmd_ablate_rewind(&cfg, &run.summary.run_id, &[0.8], &[0, t], 1).map_err(|e| e.to_string())?;
        if let Some(f) = res.failures.first() {
            return Err(f.message.clone());
        }
        let wer_at = |e: u32| res.points.iter().find(|p| p.rewind_epoch == e).map(|p| p.test_wer);
        at0.push(wer_at(0).ok_or("t=0 missing")?);
        at_t.push(wer_at(t).ok_or("t=T missing")?);
    }
    let (m0, mt) = (median3(at0.clone()), median3(at_t.clone()));
    let line = format!("median WER t=T {mt:.2} vs t=0 {m0:.2} (per seed t=T {at_t:.2?}, t=0 {at0:.2?})");
    ensure(mt <= m0, || line.clone())?;
    Ok(line)
}

fn c9_noise(out: &Path) -> Outcome {
    let sparse = ModelRef::Pruned {
        method: MethodName::IterLrr,
        sparsity: 0.5,
    };
    let (mut gap0, mut gap8) = (Vec::new(), Vec::new());
    for seed in 1..=3 {
        let mut cfg = seeded(out, seed);
        cfg.augment.enabled = true;
        let run = cmd_train_dense(&cfg).map_err(|e| e.to_string())?;
        let rows = cmd_eval_noise(&cfg, &run.summary.run_id, &[ModelRef::Dense, sparse], &[NoiseKind::GaussianNoise], &[0, 8])
            .map_err(|e| e.to_string())?;
        let wer = |m: &ModelRef, level: u8| {
            rows.iter()
                .find(|r| r.model == m.to_string() && r.level == level)
                .map(|r| r.wer)
                .ok_or_else(|| format!("{m} level {level} missing"))
        };
        gap0.push(wer(&ModelRef::Dense, 0)? - wer(&sparse, 0)?);
        gap8.push(wer(&ModelRef::Dense, 8)? - wer(&sparse, 8)?);
    }
    let (m0, m8) = (median3(gap0.clone()), median3(gap8.clone()));
    let line = format!("median gap GN8 {m8:.2} vs GN0 {m0:.2} (per seed GN8 {gap8:.2?}, GN0 {gap0:.2?})");
    ensure(m8 >= m0, || line.clone())?;
    Ok(line)
}

fn c10_params() -> Outcome {
    let cfg = ModelConfig::default();
    let state = init_model(&cfg, 1).map_err(|e| e.to_string())?;
    let total = cfg.param_count();
    let prunable = cfg.prunable_count();
    ensure(state.param_count() == total && state.prunable_count() == prunable, || "closed-form counts disagree".into())?;
    let mut counts = Vec::new();
    for k in 0..10usize {
        let mask = global_magnitude_mask(&state, sp(k as f64 / 10.0), None).map_err(|e| e.to_string())?;
        let (t, nonzero) = effective_param_count(&state, &mask).map_err(|e| e.to_string())?;
        let want = total - k * prunable / 10;
        ensure(t == total && nonzero == want, || format!("s=0.{k}: {nonzero} vs {want}"))?;
        counts.push(nonzero);
    }
    Ok(format!("total {total}, prunable {prunable}, counts {counts:?}"))
}

fn c11_sparse() -> Outcome {
    let mut r = rng::stream(11, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (rows, cols) = (r.random_range(1..64), r.random_range(1..64));
        let density = r.random::<f64>();
        let w = Array2::from_shape_fn((rows, cols), |_| r.random_range(-2.0..2.0));
        let keep = Array2::from_shape_fn((rows, cols), |_| r.random::<f64>() < density);
        let x: Vec<f64> = (0..cols).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = spmv(&to_csr(w.view(), keep.view()).map_err(|e| e.to_string())?, &x).map_err(|e| e.to_string())?;
        let oracle = masked_matvec(&w, &keep, &x);
        for (row, (a, b)) in y.iter().zip(oracle).enumerate() {
            // Relative to the sum of absolute products, so cancellation near zero is not penalized.
            let magnitude: f64 = (0..cols).filter(|&c| keep[[row, c]]).map(|c| (w[[row, c]] * x[c]).abs()).sum();
            worst = worst.max((a - b).abs() / magnitude.max(f64::MIN_POSITIVE));
        }
    }
    ensure(worst <= 1e-6, || format!("relative error {worst:e}"))?;
    let report = bench(&[2048], &[0.9], 20, 1).map_err(|e| e.to_string())?;
    let b = &report[0];
    ensure(b.checksums_match(), || "benchmark checksums differ".into())?;
    let soft = if b.speedup > 1.0 { "met" } else { "not met" };
    Ok(format!(
        "1000 instances, max rel error {worst:.1e}; n=2048 s=0.9 speedup {:.2}x (soft check {soft})",
        b.speedup
    ))
}

fn c12_determinism(out: &Path) -> Outcome {
    let other = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = cmd_train_dense(&seeded(out, 1)).map_err(|e| e.to_string())?;
    let b = cmd_train_dense(&seeded(other.path(), 1)).map_err(|e| e.to_string())?;
    let final_of = |dir: &Path, total: u32| -> Result<Vec<u8>, String> {
        let store = SnapshotStore::open(&dir.join("snapshots")).map_err(|e| e.to_string())?;
        fs::read(store.path_of(total).ok_or("final snapshot missing")?).map_err(|e| e.to_string())
    };
    let total = a.summary.total_epochs;
    let (ba, bb) = (final_of(&a.dir, total)?, final_of(&b.dir, total)?);
    ensure(ba == bb, || "final checkpoints differ".into())?;
    Ok(format!("final checkpoints identical ({} bytes, sha256 {})", ba.len(), &a.summary.final_sha256[..16]))
}

fn main() -> ExitCode {
    let shared = tempfile::tempdir().expect("tempdir");
    let small = tempfile::tempdir().expect("tempdir");
    let out = shared.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("criterion 1", Box::new(c1_mask_oracle)),
        ("criterion 2", Box::new(|| c2_frozen(small.path()))),
        ("criterion 3", Box::new(|| c3_rewind(small.path()))),
        ("criterion 4", Box::new(c4_nesting)),
        ("criterion 5", Box::new(c5_ctc)),
        ("criterion 6", Box::new(c6_wer)),
        ("criterion 7", Box::new(|| c7_trend(out))),
        ("learnability", Box::new(|| learnability(out))),
        ("criterion 8", Box::new(|| c8_rewind(out))),
        ("criterion 9", Box::new(|| c9_noise(out))),
        ("criterion 10", Box::new(c10_params)),
        ("criterion 11", Box::new(c11_sparse)),
        ("criterion 12", Box::new(|| c12_determinism(out))),
    ];
    let mut failed = 0;
    for (n, check) in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("{n}: PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{n}: FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
