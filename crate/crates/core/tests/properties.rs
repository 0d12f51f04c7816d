//! Invariants of the feedback kernels, tokenizer, policy and losses.

mod common;

use common::gradcheck::{self, random_policy};
use feedtrans_core::feedback::{kl_divergence, length_factor, omega_cf_from, omega_compiler_from, omega_sf};
use feedtrans_core::kwtok::{build_vocab, decode, encode, KeywordLists, Vocabulary, DEFAULT_MAX_MERGES};
use feedtrans_core::minilang::{
    gen_program, join_surfaces, lex, render_program, Diagnostic, GenConfig, Lang, CONTEXT_COUNT, KINDS,
};
use feedtrans_core::policy::{Decode, Direction};
use feedtrans_core::training::{ce_loss, gold_sites};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::LazyLock;

fn texts(lang: Lang, seeds: std::ops::Range<u64>) -> Vec<String> {
    seeds.map(|s| render_program(&gen_program(s, &GenConfig::default()), lang).unwrap()).collect()
}

static VOCABS: LazyLock<[Vocabulary; 2]> = LazyLock::new(|| {
    [Lang::MiniJ, Lang::MiniP]
        .map(|lang| build_vocab(&texts(lang, 1000..1040), &KeywordLists::builtin(), DEFAULT_MAX_MERGES).unwrap())
});

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compiler_feedback_range(len in 1usize..400, pos in 1usize..400, ok in any::<bool>()) {
        let d = if ok { Diagnostic::success() } else { Diagnostic::error(pos.min(len), "e") };
        let w = omega_compiler_from(&d, len);
        prop_assert!(w == 2.0 || (w > 0.0 && w < 1.0));
        prop_assert_eq!(w == 2.0, ok);
    }

    #[test]
    fn compiler_feedback_monotone_in_position(len in 2usize..300, a in 1usize..300, b in 1usize..300) {
        let (lo, hi) = (a.min(b).min(len), a.max(b).min(len));
        let w = |p| omega_compiler_from(&Diagnostic::error(p, "e"), len);
        prop_assert!(w(lo) <= w(hi));
    }

    #[test]
    fn cf_range_and_peak(t in 1usize..200, h in 0usize..800, ok in any::<bool>()) {
        prop_assume!(h <= 4 * t);
        let compiler = if ok { 2.0 } else { 0.5 };
        let cf = omega_cf_from(compiler, t, h).unwrap();
        prop_assert!((0.0..=2.0).contains(&cf));
        if h >= 1 {
            prop_assert!(cf > 0.0);
        }
        prop_assert!(length_factor(t, h).unwrap() <= length_factor(t, t).unwrap());
    }

    #[test]
    fn sf_range(total in 0usize..60, passes in 0usize..60, eps in 1e-6f64..1.0) {
        let p = passes.min(total);
        let s = omega_sf(p, total, eps);
        prop_assert!(s.value > 0.0 && s.value <= 1.0);
        prop_assert_eq!(s.value == 1.0, p == total);
    }

    #[test]
    fn kl_nonnegative_and_zero_on_self(seed in any::<u64>(), n in 1usize..6, k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dist = || -> Vec<f64> {
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| (x / z).ln()).collect()
        };
        let p: Vec<Vec<f64>> = (0..n).map(|_| dist()).collect();
        let q: Vec<Vec<f64>> = (0..n).map(|_| dist()).collect();
        let kl = kl_divergence(&p, &q).unwrap();
        // Direct summation over the explicit distributions.
        let oracle: f64 = p.iter().zip(&q).map(|(a, b)| {
            a.iter().zip(b).map(|(x, y)| x.exp() * (x - y)).sum::<f64>()
        }).sum::<f64>() / n as f64;
        prop_assert!(kl >= 0.0);
        prop_assert!((kl - oracle).abs() < 1e-9);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn ce_nonnegative(seed in 0u64..500) {
        let program = gen_program(seed, &GenConfig::default());
        let gold = gold_sites(&program, Direction::Forward).unwrap();
        let policy = random_policy(Direction::Forward, seed, seed % 2 == 0);
        let predicted = policy.translate_program(&program, Decode::Sample { seed }).trace.decisions;
        prop_assert!(ce_loss(&gold, &predicted).unwrap() >= 0.0);
    }

    #[test]
    fn lora_is_transparent_at_init(seed in any::<u64>(), rank in 1usize..16) {
        let base = random_policy(Direction::Forward, seed, false);
        let wrapped = base.apply_lora(rank, 2.0 * rank as f64, seed).unwrap();
        prop_assert_eq!(wrapped.effective(), base.effective());
        for kind in KINDS {
            for ctx in 0..CONTEXT_COUNT {
                prop_assert_eq!(wrapped.log_probs(kind, ctx), base.log_probs(kind, ctx));
            }
        }
        let program = gen_program(seed % 1000, &GenConfig::default());
        prop_assert_eq!(
            wrapped.translate_program(&program, Decode::Sample { seed }),
            base.translate_program(&program, Decode::Sample { seed })
        );
    }

    #[test]
    fn tokenizer_round_trip(seed in 0u64..300, minip in any::<bool>()) {
        let lang = if minip { Lang::MiniP } else { Lang::MiniJ };
        let vocab = &VOCABS[usize::from(minip)];
        let code = render_program(&gen_program(seed, &GenConfig::default()), lang).unwrap();
        let seq = encode(&code, lang, vocab).unwrap();
        let lexemes: Vec<String> = lex(&code, lang).unwrap().into_iter().map(|l| l.text).collect();
        let text = decode(&seq, vocab).unwrap();
        prop_assert_eq!(&text, &join_surfaces(&lexemes, lang));
        let again: Vec<String> = lex(&text, lang).unwrap().into_iter().map(|l| l.text).collect();
        prop_assert_eq!(again, lexemes);
        for t in lang.terminals() {
            if code.split_whitespace().any(|w| w == t) {
                prop_assert!(vocab.is_atomic(t));
            }
        }
    }

    #[test]
    fn sequence_gradient_matches_finite_differences(seed in 0u64..10_000, wrapped in any::<bool>()) {
        prop_assert!(gradcheck::sequence_error(seed, wrapped) <= 1e-4);
    }

    #[test]
    fn ce_gradient_matches_finite_differences(seed in 0u64..10_000, wrapped in any::<bool>(), back in any::<bool>()) {
        let direction = if back { Direction::Backward } else { Direction::Forward };
        prop_assert!(gradcheck::ce_error(seed, wrapped, direction) <= 1e-4);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences(seed in 0u64..10_000, adv in -3.0f64..3.0) {
        prop_assert!(gradcheck::surrogate_error(seed, adv) <= 1e-4);
    }
}

#[test]
fn forced_adapter_matches_explicit_sum() {
    let base = random_policy(Direction::Backward, 3, false);
    let mut wrapped = base.apply_lora(2, 6.0, 9).unwrap();
    let a = wrapped.lora().unwrap().a.clone();
    let (r, cols) = (2, wrapped.base().ncols());
    let b = Array2::from_shape_fn((r, cols), |(i, j)| ((i * cols + j) as f64 * 0.37).sin());
    wrapped.set_lora_b(b.clone()).unwrap();
    let eff = wrapped.effective();
    for i in 0..eff.nrows() {
        for j in 0..cols {
            let low: f64 = (0..r).map(|k| a[[i, k]] * b[[k, j]]).sum();
            let want = base.base()[[i, j]] + 3.0 * low;
            assert!((eff[[i, j]] - want).abs() < 1e-12);
        }
    }
}
