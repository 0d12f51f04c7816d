//! Generated parallel corpora: MiniJ sources, their reference MiniP
//! translations, basis-path unit tests and stdin/stdout cases.

use crate::kwtok::{build_vocab, encode, KeywordLists, KwTokError, TokenSeq, Vocabulary, DEFAULT_MAX_MERGES};
use crate::metrics::IoCase;
use crate::minilang::{
    gen_program, gold_transpile, parse_text, render_program, run_program, Expr, ExprKind, GenConfig, Lang, Program,
    StmtKind,
};
use crate::symexec::{generate_tests, SymexecConfig, TestCase, TestSuite};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("record `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error(transparent)]
    Tokenizer(#[from] KwTokError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    /// MiniJ source text.
    pub source: String,
    /// Reference MiniP translation.
    pub target: String,
    #[serde(default)]
    pub tests: Vec<TestCase>,
    #[serde(default)]
    pub io_cases: Vec<IoCase>,
}

impl CorpusRecord {
    pub fn suite(&self) -> TestSuite {
        TestSuite { source_id: self.id.clone(), cases: self.tests.clone(), stats: Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub gen: GenConfig,
    pub symexec: SymexecConfig,
    /// Stdin cases attempted per program.
    pub io_cases: usize,
    pub io_fuel: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { gen: GenConfig::default(), symexec: SymexecConfig::default(), io_cases: 3, io_fuel: 100_000 }
    }
}

fn read_count(program: &Program) -> usize {
    let mut n = 0;
    let mut count = |e: &Expr| {
        e.walk(&mut |x| n += usize::from(matches!(x.kind, ExprKind::Read)));
    };
    program.main.walk(&mut |s| match &s.kind {
        StmtKind::Decl { value, .. } | StmtKind::Assign { value, .. } | StmtKind::Print(value) => count(value),
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => count(cond),
        StmtKind::Pass => {}
    });
    n
}

fn io_cases_for(program: &Program, rng: &mut ChaCha8Rng, cfg: &CorpusConfig) -> Vec<IoCase> {
    let reads = read_count(program);
    let mut out = Vec::new();
    for _ in 0..cfg.io_cases * 3 {
        if out.len() == cfg.io_cases {
            break;
        }
        let stdin: Vec<String> = (0..reads).map(|_| rng.random_range(-9i64..=9).to_string()).collect();
        let stdin = stdin.join(" ");
        if let Ok(expected) = run_program(program, Lang::MiniJ, &stdin, cfg.io_fuel) {
            if !out.iter().any(|c: &IoCase| c.stdin == stdin) {
                out.push(IoCase { stdin, expected });
            }
        }
    }
    out
}

/// Redraws of a program whose top level fails on every stdin tried.
const MAX_REDRAWS: u64 = 16;

/// One record per seed `seed, seed + 1, ...`; ids are `ex-NNNNN`. A program
/// that yields no stdin case (e.g. it always divides by zero) is redrawn
/// from a derived seed, so gold translations are IO-checkable.
pub fn generate_corpus(n: usize, seed: u64, cfg: &CorpusConfig) -> Vec<CorpusRecord> {
    (0..n)
        .map(|i| {
            let base = seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0xA24B_AED4_963E_E407));
            let mut program = gen_program(base, &cfg.gen);
            let mut io_cases = io_cases_for(&program, &mut rng, cfg);
            for attempt in 1..=MAX_REDRAWS {
                if !io_cases.is_empty() || cfg.io_cases == 0 {
                    break;
                }
                program = gen_program(base ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15), &cfg.gen);
                io_cases = io_cases_for(&program, &mut rng, cfg);
            }
            let id = format!("ex-{i:05}");
            let source = render_program(&program, Lang::MiniJ).expect("generated programs render");
            let target = gold_transpile(&program).expect("generated programs render");
            let tests = generate_tests(&program, &id, &cfg.symexec).cases;
            CorpusRecord { id, source, target, tests, io_cases }
        })
        .collect()
}

pub fn write_corpus_jsonl<W: Write>(records: &[CorpusRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Blank lines are skipped; errors carry the 1-based line number.
pub fn read_corpus_jsonl<R: BufRead>(input: R) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Format { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// A tokenized training pair with its test suite.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub s: TokenSeq,
    pub t: TokenSeq,
    pub suite: TestSuite,
}

/// Learns a vocabulary over both sides of `records`.
pub fn corpus_vocab(records: &[CorpusRecord]) -> Result<Vocabulary, KwTokError> {
    let texts: Vec<&str> = records.iter().flat_map(|r| [r.source.as_str(), r.target.as_str()]).collect();
    build_vocab(&texts, &KeywordLists::builtin(), DEFAULT_MAX_MERGES)
}

/// Tokenizes every record, checking that both sides parse.
pub fn tokenize_corpus(records: &[CorpusRecord], vocab: &Vocabulary) -> Result<Vec<TrainExample>, CorpusError> {
    records
        .iter()
        .map(|r| {
            for (text, lang) in [(&r.source, Lang::MiniJ), (&r.target, Lang::MiniP)] {
                parse_text(text, lang)
                    .map_err(|e| CorpusError::Invalid { id: r.id.clone(), message: e.to_string() })?;
            }
            Ok(TrainExample {
                id: r.id.clone(),
                s: encode(&r.source, Lang::MiniJ, vocab)?,
                t: encode(&r.target, Lang::MiniP, vocab)?,
                suite: r.suite(),
            })
        })
        .collect()
}
