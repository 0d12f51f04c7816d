pub mod corpus;
pub mod evaluate;
pub mod sweep;
pub mod train;

use crate::error::{Classify, CliError};
use crate::manifest::Run;
use feedtrans_core::corpus::read_corpus_jsonl;
use feedtrans_core::{CompileBackend, CorpusRecord, Lang};
use std::path::Path;

pub fn load_corpus(path: &Path, run: &mut Run) -> Result<Vec<CorpusRecord>, CliError> {
    let bytes = run.read_input(path)?;
    read_corpus_jsonl(&bytes[..]).input(&path.display().to_string())
}

/// The configured backend, or the builtin checker for `lang`.
pub fn load_backend(path: Option<&Path>, lang: Lang, run: &mut Run) -> Result<CompileBackend, CliError> {
    let Some(path) = path else {
        return Ok(CompileBackend::builtin(lang));
    };
    let bytes = run.read_input(path)?;
    let text = String::from_utf8(bytes).input(&path.display().to_string())?;
    let backend = CompileBackend::from_json(&text).input(&path.display().to_string())?;
    if backend.lang() != lang {
        return Err(CliError::Input(format!(
            "{}: backend checks {:?}, expected {lang:?}",
            path.display(),
            backend.lang()
        )));
    }
    Ok(backend)
}

pub fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("records serialise");
        out.push(b'\n');
    }
    out
}
