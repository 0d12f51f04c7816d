//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod cfg_oracle;
pub mod gradcheck;
pub mod prefix_oracle;

use feedtrans_core::corpus::{corpus_vocab, generate_corpus, tokenize_corpus, CorpusConfig, TrainExample};
use feedtrans_core::feedback::{Backends, CompileBackend};
use feedtrans_core::kwtok::Vocabulary;
use feedtrans_core::minilang::{lex, Lang};
use feedtrans_core::policy::{CorruptConfig, Direction, GrammarPolicy};
use feedtrans_core::training::TrainEnv;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const REFERENCE_PROGRAM: &str = include_str!("../../data/reverse_integer.mj");

pub fn lexemes(code: &str, lang: Lang) -> Vec<String> {
    lex(code, lang).expect("lexes").into_iter().map(|l| l.text).collect()
}

/// One random token-level edit: delete, insert, swap neighbours or replace.
pub fn mutate(tokens: &[String], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = tokens.to_vec();
    let pool = prefix_oracle::terminals();
    let extra = ["x", "n", "zz", "7", "0"];
    let pick = |rng: &mut ChaCha8Rng| -> String {
        if rng.random_bool(0.8) { pool.choose(rng) } else { extra.choose(rng) }.expect("non-empty").to_string()
    };
    let i = rng.random_range(0..out.len());
    match rng.random_range(0..4) {
        0 if out.len() > 1 => {
            out.remove(i);
        }
        1 => out.insert(i, pick(rng)),
        2 if i + 1 < out.len() => out.swap(i, i + 1),
        _ => out[i] = pick(rng),
    }
    out
}

pub struct Fixture {
    pub vocab: Vocabulary,
    pub examples: Vec<TrainExample>,
}

pub fn corpus_fixture(n: usize, seed: u64) -> Fixture {
    let records = generate_corpus(n, seed, &CorpusConfig::default());
    let vocab = corpus_vocab(&records).expect("vocab");
    let examples = tokenize_corpus(&records, &vocab).expect("tokenize");
    Fixture { vocab, examples }
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central difference of `f` at `x` along `dir`.
pub fn directional_fd(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], dir: &[f64], h: f64) -> f64 {
    let shifted = |s: f64| x.iter().zip(dir).map(|(a, d)| a + s * d).collect::<Vec<f64>>();
    (f(&shifted(h)) - f(&shifted(-h))) / (2.0 * h)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub struct BuiltinBackends {
    pub minij: CompileBackend,
    pub minip: CompileBackend,
}

pub fn builtin_backends() -> BuiltinBackends {
    BuiltinBackends { minij: CompileBackend::builtin(Lang::MiniJ), minip: CompileBackend::builtin(Lang::MiniP) }
}

pub fn env<'a>(fx: &'a Fixture, b: &'a BuiltinBackends) -> TrainEnv<'a> {
    TrainEnv { vocab: &fx.vocab, backends: Backends { target: &b.minip, source: &b.minij } }
}

/// Faithful policies with a seeded fraction of kinds pushed onto wrong rules.
pub fn corrupted_pair(seed: u64) -> (GrammarPolicy, GrammarPolicy) {
    let c = CorruptConfig::default();
    (
        GrammarPolicy::faithful(Direction::Forward, 2.0).corrupted(&c, seed).expect("unwrapped"),
        GrammarPolicy::faithful(Direction::Backward, 2.0).corrupted(&c, seed + 100).expect("unwrapped"),
    )
}
