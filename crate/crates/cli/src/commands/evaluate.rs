use super::{jsonl, load_backend, load_corpus};
use crate::error::{Classify, CliError};
use crate::manifest::Run;
use crate::{EvaluateArgs, TranslateArgs};
use feedtrans_core::corpus::{corpus_vocab, tokenize_corpus};
use feedtrans_core::kwtok::{decode, encode};
use feedtrans_core::metrics::{corpus_report, EvalItem, REPORT_VERSION};
use feedtrans_core::policy::Decode;
use feedtrans_core::{Direction, GrammarPolicy, Lang, TokenSeq, Vocabulary};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Interpreter fuel per stdin case, as used when the corpus was generated.
const IO_FUEL: u64 = 100_000;

/// Placeholder id for hypothesis pieces that do not lex.
const UNLEXED_ID: u32 = u32::MAX;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslationRecord {
    id: String,
    translation: String,
}

/// Hypotheses that do not lex are kept as whitespace-separated pieces so
/// they still get scored (and fail to compile) instead of aborting the run.
fn hypothesis(text: &str, vocab: &Vocabulary) -> TokenSeq {
    encode(text, Lang::MiniP, vocab).unwrap_or_else(|_| {
        let surfaces: Vec<String> = text.split_whitespace().map(String::from).collect();
        TokenSeq { ids: vec![UNLEXED_ID; surfaces.len()], surfaces, lang: Lang::MiniP }
    })
}

pub fn evaluate(args: &EvaluateArgs, run: &mut Run) -> Result<String, CliError> {
    run.set_params(&json!({ "io_fuel": IO_FUEL, "report_version": REPORT_VERSION }));
    let records = load_corpus(&args.corpus, run)?;
    let bytes = run.read_input(&args.translations)?;
    let backend = load_backend(args.backend.as_deref(), Lang::MiniP, run)?;
    let text = String::from_utf8(bytes).input(&args.translations.display().to_string())?;
    let vocab = corpus_vocab(&records).input("building vocabulary")?;

    let mut hyps = Vec::with_capacity(records.len());
    let lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for (k, (i, line)) in lines.enumerate() {
        let at = |m: String| CliError::Input(format!("{}: line {}: {m}", args.translations.display(), i + 1));
        let rec: TranslationRecord = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        let Some(expected) = records.get(k) else {
            return Err(at(format!("more translations than the {} corpus records", records.len())));
        };
        if rec.id != expected.id {
            return Err(at(format!("id `{}` where the corpus has `{}`", rec.id, expected.id)));
        }
        hyps.push(hypothesis(&rec.translation, &vocab));
    }
    if hyps.len() != records.len() {
        return Err(CliError::Input(format!("{} translations for {} corpus records", hyps.len(), records.len())));
    }

    let items = records
        .iter()
        .map(|r| {
            let reference = encode(&r.target, Lang::MiniP, &vocab).input(&format!("record `{}`", r.id))?;
            Ok(EvalItem { id: r.id.clone(), reference, io_cases: r.io_cases.clone() })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = corpus_report(&items, &hyps, &backend, IO_FUEL).internal("evaluating")?;
    run.write_output(&args.out, report.to_jsonl().as_bytes())?;

    let a = &report.aggregate;
    println!("{:>6} {:>8} {:>8} {:>8} {:>8} {:>8}", "n", "CompAcc", "FEqAcc", "EM", "ErrPos", "BLEU");
    println!(
        "{:>6} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
        a.n, a.comp_acc, a.feq_acc, a.em, a.mean_err_pos, a.corpus_bleu
    );
    run.detail("aggregate", a);
    Ok("ok".into())
}

pub fn translate(args: &TranslateArgs, run: &mut Run) -> Result<String, CliError> {
    run.set_params(&json!({ "decode": "greedy" }));
    let records = load_corpus(&args.corpus, run)?;
    let path = if args.policy.is_dir() { args.policy.join("forward") } else { args.policy.clone() };
    let bytes = run.read_input(&path)?;
    let text = String::from_utf8(bytes).input(&path.display().to_string())?;
    let policy = GrammarPolicy::from_checkpoint_str(&text).input(&path.display().to_string())?;
    if policy.direction() != Direction::Forward {
        return Err(CliError::Input(format!("{}: not a forward policy", path.display())));
    }
    let vocab = corpus_vocab(&records).input("building vocabulary")?;
    let examples = tokenize_corpus(&records, &vocab).input("tokenizing corpus")?;
    let mut failures = 0;
    let out: Vec<TranslationRecord> = examples
        .iter()
        .map(|ex| {
            let translation = policy
                .translate(&ex.s, &vocab, Decode::Greedy)
                .ok()
                .and_then(|(seq, _)| decode(&seq, &vocab).ok())
                .unwrap_or_else(|| {
                    failures += 1;
                    String::new()
                });
            TranslationRecord { id: ex.id.clone(), translation }
        })
        .collect();
    run.write_output(&args.out, &jsonl(&out))?;
    run.detail("translated", out.len() - failures);
    run.detail("failed", failures);
    Ok("ok".into())
}
