//! Translation-quality metrics: compile rate, IO equivalence under
//! normalised output matching, first-error position, BLEU and exact match.

mod baseline;

pub use baseline::{
    baseline_rewards, def_use_pairs, reward_sweep, subtree_shapes, BaselineRewards, SweepRow, SAMPLE_PROGRAM,
};

use crate::feedback::{BackendError, CompileBackend};
use crate::kwtok::TokenSeq;
use crate::minilang::{group_pieces, parse_surfaces, run_program, Diagnostic, Lang, Program};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::LazyLock;
use thiserror::Error;

/// Punctuation is stripped only when it makes up at most this share of the
/// non-space characters outside numbers.
pub const PUNCTUATION_THRESHOLD: f64 = 0.10;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{what}: {left} vs {right} items")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?(\d+\.?\d*|\.\d+)(e[+-]?\d+)?$").expect("valid regex"));

fn canonical_number(tok: &str) -> Option<String> {
    if !NUMBER.is_match(tok) {
        return None;
    }
    let v: f64 = tok.parse().ok()?;
    if !v.is_finite() {
        return None;
    }
    if v == 0.0 {
        return Some("0".into());
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        return Some(format!("{}", v as i64));
    }
    Some(format!("{v}"))
}

/// Canonical form for output matching: lowercase, single spaces, canonical
/// numbers, and punctuation removed when it is a minor part of the text.
pub fn normalize_output(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let mut toks: Vec<(String, bool)> = lower
        .split_whitespace()
        .map(|t| match canonical_number(t) {
            Some(n) => (n, true),
            None => (t.to_string(), false),
        })
        .collect();
    let non_space: usize = toks.iter().map(|(t, _)| t.chars().count()).sum();
    let punct: usize =
        toks.iter().filter(|(_, num)| !num).map(|(t, _)| t.chars().filter(char::is_ascii_punctuation).count()).sum();
    if punct > 0 && punct as f64 <= PUNCTUATION_THRESHOLD * non_space as f64 {
        toks = toks
            .into_iter()
            .filter_map(|(t, num)| {
                if num {
                    return Some((t, true));
                }
                let stripped: String = t.chars().filter(|c| !c.is_ascii_punctuation()).collect();
                match canonical_number(&stripped) {
                    Some(n) => Some((n, true)),
                    None => (!stripped.is_empty()).then_some((stripped, false)),
                }
            })
            .collect();
    }
    toks.into_iter().map(|(t, _)| t).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoCase {
    pub stdin: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoVerdict {
    pub equivalent: bool,
    pub reason: Option<String>,
}

/// Runs the candidate on every case and compares normalised stdout.
pub fn io_equivalent(candidate: Option<&Program>, lang: Lang, cases: &[IoCase], fuel: u64) -> IoVerdict {
    let fail = |reason: String| IoVerdict { equivalent: false, reason: Some(reason) };
    let Some(program) = candidate else { return fail("candidate does not compile".into()) };
    if cases.is_empty() {
        return fail("no test cases".into());
    }
    for (i, case) in cases.iter().enumerate() {
        match run_program(program, lang, &case.stdin, fuel) {
            Ok(out) if normalize_output(&out) == normalize_output(&case.expected) => {}
            Ok(_) => return fail(format!("case {i}: output differs")),
            Err(e) => return fail(format!("case {i}: {e}")),
        }
    }
    IoVerdict { equivalent: true, reason: None }
}

/// 100 for a compiling candidate, otherwise 100 · position / length.
pub fn err_pos_from(diagnostic: &Diagnostic, len: usize) -> f64 {
    if len == 0 {
        return 0.0;
    }
    if diagnostic.ok {
        return 100.0;
    }
    100.0 * diagnostic.first_error_token.unwrap_or(len).clamp(1, len) as f64 / len as f64
}

pub fn err_pos_pct(t_hat: &TokenSeq, backend: &CompileBackend) -> Result<f64, BackendError> {
    if t_hat.is_empty() {
        return Ok(0.0);
    }
    Ok(err_pos_from(&backend.check(&t_hat.surfaces)?, t_hat.len()))
}

/// Clipped n-gram match counts and hypothesis n-gram totals for n = 1..=4.
fn ngram_stats(reference: &[String], hypothesis: &[String]) -> [(usize, usize); 4] {
    let mut stats = [(0, 0); 4];
    for (n, slot) in (1..=4).zip(stats.iter_mut()) {
        let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
        for g in reference.windows(n) {
            *ref_counts.entry(g).or_default() += 1;
        }
        let mut hyp_counts: HashMap<&[String], usize> = HashMap::new();
        for g in hypothesis.windows(n) {
            *hyp_counts.entry(g).or_default() += 1;
        }
        let matches = hyp_counts.iter().map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0))).sum();
        *slot = (matches, hypothesis.len().saturating_sub(n - 1));
    }
    stats
}

/// Unigram precision unsmoothed; higher orders add one to numerator and
/// denominator. Zero when no unigram matches.
fn bleu_from_stats(stats: &[(usize, usize); 4], ref_len: usize, hyp_len: usize) -> f64 {
    if hyp_len == 0 || stats[0].0 == 0 {
        return 0.0;
    }
    let mut log_sum = (stats[0].0 as f64 / stats[0].1 as f64).ln();
    for &(m, c) in &stats[1..] {
        log_sum += ((m as f64 + 1.0) / (c as f64 + 1.0)).ln();
    }
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    100.0 * bp * (log_sum / 4.0).exp()
}

pub fn bleu(reference: &[String], hypothesis: &[String]) -> f64 {
    bleu_from_stats(&ngram_stats(reference, hypothesis), reference.len(), hypothesis.len())
}

/// Micro-averaged BLEU: n-gram statistics and lengths summed over pairs.
pub fn corpus_bleu(pairs: &[(&[String], &[String])]) -> f64 {
    let mut total = [(0, 0); 4];
    let (mut r, mut h) = (0, 0);
    for (reference, hypothesis) in pairs {
        let s = ngram_stats(reference, hypothesis);
        for (t, x) in total.iter_mut().zip(s) {
            t.0 += x.0;
            t.1 += x.1;
        }
        r += reference.len();
        h += hypothesis.len();
    }
    bleu_from_stats(&total, r, h)
}

/// One evaluation item: a reference translation with IO cases obtained by
/// running the source program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub reference: TokenSeq,
    pub io_cases: Vec<IoCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub compiles: bool,
    pub io_equivalent: bool,
    pub exact_match: bool,
    /// Missing when the backend failed.
    pub err_pos_pct: Option<f64>,
    pub bleu: f64,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub version: u32,
    pub n: usize,
    pub comp_acc: f64,
    pub feq_acc: f64,
    pub em: f64,
    pub mean_err_pos: f64,
    pub corpus_bleu: f64,
    pub backend_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub records: Vec<ExampleRecord>,
    pub aggregate: Aggregate,
}

impl CorpusReport {
    /// Per-example lines followed by one `{"aggregate": ...}` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("serialisable"));
            out.push('\n');
        }
        out.push_str(&serde_json::json!({ "aggregate": self.aggregate }).to_string());
        out.push('\n');
        out
    }
}

fn percent(count: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * count as f64 / n as f64
    }
}

fn evaluate_one(item: &EvalItem, hyp: &TokenSeq, backend: &CompileBackend, fuel: u64) -> ExampleRecord {
    let lang = item.reference.lang;
    let diagnostic = if hyp.is_empty() { Ok(Diagnostic::error(0, "empty")) } else { backend.check(&hyp.surfaces) };
    let (compiles, err_pos, mut reason) = match &diagnostic {
        Ok(d) => (d.ok && !hyp.is_empty(), Some(err_pos_from(d, hyp.len())), None),
        Err(e) => (false, None, Some(format!("backend: {e}"))),
    };
    let program = if compiles { parse_surfaces(&hyp.surfaces, lang).ok() } else { None };
    let io = io_equivalent(program.as_ref(), lang, &item.io_cases, fuel);
    if reason.is_none() {
        reason = io.reason;
    }
    let (ref_lex, _) = group_pieces(&item.reference.surfaces);
    let (hyp_lex, _) = group_pieces(&hyp.surfaces);
    ExampleRecord {
        id: item.id.clone(),
        compiles,
        io_equivalent: io.equivalent,
        exact_match: ref_lex == hyp_lex,
        err_pos_pct: err_pos,
        bleu: bleu(&ref_lex, &hyp_lex),
        reason,
    }
}

/// Evaluates aligned hypotheses. Per-example work runs in parallel; the
/// records keep input order so the report is deterministic.
pub fn corpus_report(
    items: &[EvalItem],
    hypotheses: &[TokenSeq],
    backend: &CompileBackend,
    fuel: u64,
) -> Result<CorpusReport, MetricsError> {
    if items.len() != hypotheses.len() {
        return Err(MetricsError::LengthMismatch {
            what: "items and hypotheses",
            left: items.len(),
            right: hypotheses.len(),
        });
    }
    let records: Vec<ExampleRecord> =
        items.par_iter().zip(hypotheses.par_iter()).map(|(i, h)| evaluate_one(i, h, backend, fuel)).collect();
    let n = records.len();
    let err: Vec<f64> = records.iter().filter_map(|r| r.err_pos_pct).collect();
    let lexed: Vec<(Vec<String>, Vec<String>)> = items
        .iter()
        .zip(hypotheses)
        .map(|(i, h)| (group_pieces(&i.reference.surfaces).0, group_pieces(&h.surfaces).0))
        .collect();
    let pairs: Vec<(&[String], &[String])> = lexed.iter().map(|(r, h)| (&r[..], &h[..])).collect();
    let aggregate = Aggregate {
        version: REPORT_VERSION,
        n,
        comp_acc: percent(records.iter().filter(|r| r.compiles).count(), n),
        feq_acc: percent(records.iter().filter(|r| r.io_equivalent).count(), n),
        em: percent(records.iter().filter(|r| r.exact_match).count(), n),
        mean_err_pos: if err.is_empty() { 0.0 } else { err.iter().sum::<f64>() / err.len() as f64 },
        corpus_bleu: corpus_bleu(&pairs),
        backend_failures: n - err.len(),
    };
    Ok(CorpusReport { records, aggregate })
}
