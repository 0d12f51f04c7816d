use super::load_corpus;
use crate::error::{Classify, CliError};
use crate::manifest::Run;
use crate::GenCorpusArgs;
use feedtrans_core::corpus::{generate_corpus, write_corpus_jsonl, CorpusConfig};
use feedtrans_core::symexec::{read_suites_jsonl, write_suites_jsonl};
use feedtrans_core::TestSuite;
use serde_json::json;
use std::collections::HashMap;
use std::path::Path;

pub fn generate(args: &GenCorpusArgs, run: &mut Run) -> Result<String, CliError> {
    let cfg = CorpusConfig::default();
    run.set_params(&json!({ "count": args.count, "corpus": cfg }));
    run.seed = Some(args.seed);
    if args.count == 0 {
        return Err(CliError::Input("--count must be at least 1".into()));
    }
    let records = generate_corpus(args.count, args.seed, &cfg);
    let mut bytes = Vec::new();
    write_corpus_jsonl(&records, &mut bytes).internal("serialising corpus")?;
    run.write_output(&args.out, &bytes)?;
    run.detail("records", records.len());
    run.detail("tests", records.iter().map(|r| r.tests.len()).sum::<usize>());
    run.detail("io_cases", records.iter().map(|r| r.io_cases.len()).sum::<usize>());
    Ok("ok".into())
}

pub fn export_suites(corpus: &Path, out: &Path, run: &mut Run) -> Result<String, CliError> {
    run.set_params(&json!({}));
    let records = load_corpus(corpus, run)?;
    let suites: Vec<TestSuite> = records.iter().map(|r| r.suite()).collect();
    let mut bytes = Vec::new();
    write_suites_jsonl(&suites, &mut bytes).internal("serialising suites")?;
    run.write_output(out, &bytes)?;
    run.detail("cases", suites.iter().map(|s| s.cases.len()).sum::<usize>());
    Ok("ok".into())
}

/// Records not named in the suite file keep their tests.
pub fn import_suites(corpus: &Path, suites: &Path, out: &Path, run: &mut Run) -> Result<String, CliError> {
    run.set_params(&json!({}));
    let mut records = load_corpus(corpus, run)?;
    let bytes = run.read_input(suites)?;
    let suites = read_suites_jsonl(&bytes[..]).input(&suites.display().to_string())?;
    let index: HashMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    let mut replaced = 0;
    for suite in suites {
        let Some(&i) = index.get(&suite.source_id) else {
            return Err(CliError::Input(format!("suite for unknown source id `{}`", suite.source_id)));
        };
        records[i].tests = suite.cases;
        replaced += 1;
    }
    let mut bytes = Vec::new();
    write_corpus_jsonl(&records, &mut bytes).internal("serialising corpus")?;
    run.write_output(out, &bytes)?;
    run.detail("replaced", replaced);
    Ok("ok".into())
}
