mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use prunelab::checkpoint::{decode, encode};
use prunelab::ctc::{ctc_loss, greedy_decode, Transcript};
use prunelab::data::FeatureSequence;
use prunelab::nn::{lr_at, ModelConfig, Network, TrainSchedule};
use prunelab::noise::{corrupt, NoiseKind, NoiseSpec, SeveritySchedule};
use prunelab::prune::{apply_mask, effective_param_count, global_magnitude_mask, sparsity_of, Sparsity};
use prunelab::rng;
use prunelab::sparse::{spmv, to_csr};
use prunelab::wer::{edit_distance, wer};

fn small_cfg() -> impl Strategy<Value = ModelConfig> {
    (1usize..6, 1usize..10, 1usize..3, 2usize..6, 0usize..3).prop_map(|(d, h, b, a, k)| ModelConfig {
        feature_dim: d,
        hidden_dim: h,
        num_blocks: b,
        alphabet_size: a,
        conv_kernel: 2 * k + 1,
    })
}

fn kinds() -> impl Strategy<Value = NoiseKind> {
    prop::sample::select(vec![
        NoiseKind::BlockWise,
        NoiseKind::GaussianBlur,
        NoiseKind::MotionBlur,
        NoiseKind::Pixelate,
        NoiseKind::GaussianNoise,
        NoiseKind::Contrast,
        NoiseKind::Compression,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mask_exact_count_threshold_and_nesting(cfg in small_cfg(), seed in 0u64..1000, ties in 0u32..4, a in 0.0f64..0.99, b in 0.0f64..0.99) {
        let state = random_state(&cfg, seed, ties);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (lo, hi) = (Sparsity::new(lo).unwrap(), Sparsity::new(hi).unwrap());
        let p = state.prunable_count();
        let m1 = global_magnitude_mask(&state, lo, None).unwrap();
        prop_assert_eq!(m1.zeros(), lo.prune_count(p));
        let m2 = global_magnitude_mask(&state, hi, Some(&m1)).unwrap();
        prop_assert_eq!(m2.zeros(), hi.prune_count(p));
        prop_assert!(m1.nested_in(&m2));
        // Threshold property for a fresh mask.
        let fresh = global_magnitude_mask(&state, hi, None).unwrap();
        let mut kept_min = f32::INFINITY;
        let mut pruned_max = 0.0f32;
        for t in fresh.tensors() {
            let values = &state.get(&t.name).unwrap().values;
            for (v, k) in values.iter().zip(&t.keep) {
                if *k { kept_min = kept_min.min(v.abs()) } else { pruned_max = pruned_max.max(v.abs()) }
            }
        }
        prop_assert!(kept_min >= pruned_max);
        prop_assert!((sparsity_of(&fresh) - fresh.zeros() as f64 / p as f64).abs() < 1e-15);
    }

    #[test]
    fn apply_mask_is_idempotent_and_zeroes_pruned(cfg in small_cfg(), seed in 0u64..1000, s in 0.0f64..0.99) {
        let state = random_state(&cfg, seed, 0);
        let mask = global_magnitude_mask(&state, Sparsity::new(s).unwrap(), None).unwrap();
        let once = apply_mask(&state, &mask).unwrap();
        prop_assert_eq!(&apply_mask(&once, &mask).unwrap(), &once);
        for t in mask.tensors() {
            let v = &once.get(&t.name).unwrap().values;
            for (x, k) in v.iter().zip(&t.keep) {
                if !k { prop_assert_eq!(x.to_bits(), 0) }
            }
        }
        for p in once.params.iter().filter(|p| !p.prunable) {
            prop_assert_eq!(&p.values, &state.get(&p.name).unwrap().values);
        }
        let (total, nonzero) = effective_param_count(&once, &mask).unwrap();
        prop_assert_eq!(total, cfg.param_count());
        prop_assert_eq!(nonzero, total - mask.zeros());
    }

    #[test]
    fn forward_rows_are_normalized(cfg in small_cfg(), seed in 0u64..1000, frames in 1usize..9) {
        let state = random_state(&cfg, seed, 0);
        let net = Network::from_state(&state).unwrap();
        let mut r = rng::stream(seed, 3);
        let x = Array2::from_shape_fn((frames, cfg.feature_dim), |_| rand::Rng::random_range(&mut r, -2.0..2.0));
        let lp = net.forward(x.view()).unwrap();
        for row in lp.rows() {
            prop_assert!((row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ctc_gradient_rows_sum_to_minus_one(seed in 0u64..10_000, frames in 2usize..10, alphabet in 2usize..6) {
        let mut r = rng::stream(seed, 4);
        let lp = random_logprobs(&mut r, frames, alphabet, 3.0);
        let target = Transcript::new(vec![1]).unwrap();
        let (loss, grad) = ctc_loss(lp.view(), &target).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
        for row in grad.rows() {
            prop_assert!((row.sum() + 1.0).abs() < 1e-9);
        }
        let decoded = greedy_decode(lp.view());
        prop_assert!(decoded.tokens().iter().all(|&t| t != 0));
    }

    #[test]
    fn wer_identity_and_relabel_invariance(a in prop::collection::vec(0u8..4, 1..8), b in prop::collection::vec(0u8..4, 0..8), perm in Just([2u8, 0, 3, 1])) {
        prop_assert_eq!(wer(&a, &a).unwrap().wer, 0.0);
        let relabel = |s: &[u8]| s.iter().map(|&c| perm[c as usize]).collect::<Vec<_>>();
        let w1 = wer(&a, &b).unwrap();
        let w2 = wer(&relabel(&a), &relabel(&b)).unwrap();
        prop_assert_eq!(w1.errors(), w2.errors());
        prop_assert!(w1.wer >= 0.0);
    }

    #[test]
    fn edit_distance_triangle_inequality(a in prop::collection::vec(0u8..3, 0..7), b in prop::collection::vec(0u8..3, 0..7), c in prop::collection::vec(0u8..3, 0..7)) {
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
    }

    #[test]
    fn lr_schedule_shape(total in 2u32..100, warm_frac in 0.0f64..1.0, peak in 1e-5f64..1e-1) {
        let warmup = ((total - 1) as f64 * warm_frac) as u32;
        let s = TrainSchedule { total_epochs: total, warmup_epochs: warmup, peak_lr: peak, ..TrainSchedule::default() };
        let n = 400;
        let xs: Vec<f64> = (0..=n).map(|i| f64::from(total) * i as f64 / n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&e| lr_at(&s, e).unwrap()).collect();
        for (w, y) in xs.windows(2).zip(ys.windows(2)) {
            if w[1] <= f64::from(warmup) { prop_assert!(y[1] >= y[0] - 1e-15) }
            if w[0] >= f64::from(warmup) { prop_assert!(y[1] <= y[0] + 1e-15) }
        }
        prop_assert!(ys.iter().all(|&y| y <= peak * (1.0 + 1e-12)));
        prop_assert!((lr_at(&s, f64::from(warmup)).unwrap() - peak).abs() <= peak * 1e-12);
    }

    #[test]
    fn spmv_equals_dense(rows in 1usize..30, cols in 1usize..30, seed in 0u64..10_000, density in 0.0f64..1.0) {
        let mut r = rng::stream(seed, 6);
        let mut draw = |lo: f64, hi: f64| rand::Rng::random_range(&mut r, lo..hi);
        let w = Array2::from_shape_fn((rows, cols), |_| draw(-3.0, 3.0));
        let keep = Array2::from_shape_fn((rows, cols), |_| draw(0.0, 1.0) < density);
        let x: Vec<f64> = (0..cols).map(|_| draw(-1.0, 1.0)).collect();
        let csr = to_csr(w.view(), keep.view()).unwrap();
        prop_assert!(csr.check().is_ok());
        prop_assert_eq!(csr.nnz(), keep.iter().filter(|&&k| k).count());
        let y = spmv(&csr, &x).unwrap();
        for (a, b) in y.iter().zip(masked_matvec(&w, &keep, &x)) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact(cfg in small_cfg(), seed in 0u64..1000, epoch in 0u32..100) {
        let mut state = random_state(&cfg, seed, 0);
        state.epoch_tag = epoch;
        let bytes = encode("prop", &state);
        let (_, back) = decode(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(encode("prop", &back), bytes);
        prop_assert_eq!(back, state);
    }

    #[test]
    fn corruption_preserves_shape_and_is_deterministic(kind in kinds(), level in 0u8..=10, frames in 1usize..40, dim in 1usize..8, seed in 0u64..1000) {
        let mut r = rng::stream(seed, 8);
        let values: Vec<f32> = (0..frames * dim).map(|_| rand::Rng::random_range(&mut r, -2.0f32..2.0)).collect();
        let seq = FeatureSequence::new(frames, dim, values).unwrap();
        let spec = NoiseSpec::new(kind, level).unwrap();
        let sched = SeveritySchedule::default();
        let a = corrupt(&seq, spec, seed, &sched);
        let b = corrupt(&seq, spec, seed, &sched);
        prop_assert_eq!(a.frames(), frames);
        prop_assert_eq!(a.dim(), dim);
        prop_assert!(a.values().iter().all(|v| v.is_finite()));
        prop_assert_eq!(&a, &b);
        if level == 0 { prop_assert_eq!(&a, &seq) }
    }
}
