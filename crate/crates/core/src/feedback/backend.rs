//! Compile backends: the built-in toy checkers and external commands whose
//! diagnostics are mapped back onto token positions.

use crate::minilang::{self, group_pieces, join_surfaces, Diagnostic, Lang, DEDENT, INDENT, NEW_LINE};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;
use thiserror::Error;
use wait_timeout::ChildExt;

/// Overrides the timeout of every external backend, in seconds.
pub const TIMEOUT_ENV: &str = "FEEDTRANS_BACKEND_TIMEOUT";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend crashed: {0}")]
    Crash(String),
    #[error("backend config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalBackend {
    /// Shell command; `{file}` is replaced by the path of the candidate.
    pub command: String,
    /// Regex with `line` and optionally `col` named groups matching one
    /// diagnostic in the combined stdout and stderr.
    pub pattern: String,
    pub timeout_secs: f64,
    /// Language used to render the candidate to text.
    pub lang: Lang,
    #[serde(default)]
    pub extension: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CompileBackend {
    Builtin { lang: Lang },
    External(ExternalBackend),
}

impl CompileBackend {
    pub fn builtin(lang: Lang) -> Self {
        CompileBackend::Builtin { lang }
    }

    pub fn lang(&self) -> Lang {
        match self {
            CompileBackend::Builtin { lang } => *lang,
            CompileBackend::External(e) => e.lang,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let backend: CompileBackend = serde_json::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        if let CompileBackend::External(e) = &backend {
            Regex::new(&e.pattern).map_err(|err| BackendError::Config(err.to_string()))?;
            if !e.command.contains("{file}") {
                return Err(BackendError::Config("command has no {file} placeholder".into()));
            }
            if !(e.timeout_secs > 0.0) {
                return Err(BackendError::Config("timeout must be positive".into()));
            }
        }
        Ok(backend)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks a candidate given as token surfaces.
    pub fn check(&self, surfaces: &[String]) -> Result<Diagnostic, BackendError> {
        match self {
            CompileBackend::Builtin { lang } => Ok(minilang::check(surfaces, *lang)),
            CompileBackend::External(e) => e.check(surfaces),
        }
    }
}

/// Canonical text of a surface sequence and, per lexical token, its byte
/// range and the index of its first piece.
pub fn render_with_offsets(surfaces: &[String], lang: Lang) -> (String, Vec<(usize, usize, usize)>) {
    let (lexemes, first_piece) = group_pieces(surfaces);
    let text = join_surfaces(&lexemes, lang);
    let mut spans = Vec::with_capacity(lexemes.len());
    let mut cursor = 0;
    for (lex, &piece) in lexemes.iter().zip(&first_piece) {
        let structural = lang == Lang::MiniP && [NEW_LINE, INDENT, DEDENT].contains(&lex.as_str());
        if structural {
            // Rendered as layout: anchor at the current position.
            let end = (cursor + 1).min(text.len().max(cursor));
            spans.push((cursor, end, piece));
            if lex == NEW_LINE {
                cursor = text[cursor..].find('\n').map_or(cursor, |i| cursor + i + 1);
            }
            continue;
        }
        let start = text[cursor..].find(lex.as_str()).map_or(cursor, |i| cursor + i);
        let end = start + lex.len();
        spans.push((start, end, piece));
        cursor = end.min(text.len());
    }
    (text, spans)
}

/// Maps a 1-based (line, column) position onto a 1-based piece index: the
/// token covering the position, else the next token, clamped to the length.
pub fn map_position(text: &str, spans: &[(usize, usize, usize)], len: usize, line: usize, col: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    let offset = line_start + col.saturating_sub(1);
    let index = spans.iter().find(|(_, end, _)| *end > offset).map_or(len, |(_, _, piece)| piece + 1);
    index.clamp(1, len.max(1))
}

impl ExternalBackend {
    fn timeout(&self) -> Duration {
        let secs = std::env::var(TIMEOUT_ENV).ok().and_then(|v| v.parse::<f64>().ok()).filter(|s| *s > 0.0);
        Duration::from_secs_f64(secs.unwrap_or(self.timeout_secs))
    }

    pub fn check(&self, surfaces: &[String]) -> Result<Diagnostic, BackendError> {
        if surfaces.is_empty() {
            return Ok(Diagnostic { ok: false, first_error_token: None, message: "empty program".into() });
        }
        let pattern = Regex::new(&self.pattern).map_err(|e| BackendError::Config(e.to_string()))?;
        let (text, spans) = render_with_offsets(surfaces, self.lang);
        let dir = tempfile::tempdir()?;
        let ext = self.extension.clone().unwrap_or_else(|| self.lang.extension().to_string());
        let file = dir.path().join(format!("candidate.{ext}"));
        std::fs::write(&file, &text)?;
        let quoted = format!("'{}'", file.display().to_string().replace('\'', r"'\''"));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(self.command.replace("{file}", &quoted))
            .current_dir(dir.path())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("LC_ALL", "C")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let mut stdout = child.stdout.take().expect("piped");
        let mut stderr = child.stderr.take().expect("piped");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            stderr.read_to_string(&mut s).map(|_| s)
        });
        let timeout = self.timeout();
        let status = match child.wait_timeout(timeout)? {
            Some(status) => status,
            None => {
                child.kill()?;
                child.wait()?;
                return Err(BackendError::Timeout(timeout));
            }
        };
        let joined = |h: std::thread::JoinHandle<std::io::Result<String>>| {
            h.join().map_err(|_| BackendError::Crash("output reader panicked".into()))?.map_err(BackendError::from)
        };
        let output = format!("{}{}", joined(out_reader)?, joined(err_reader)?);

        let first = pattern
            .captures_iter(&output)
            .filter_map(|c| {
                let line = c.name("line")?.as_str().parse::<usize>().ok()?;
                let col = c.name("col").and_then(|m| m.as_str().parse::<usize>().ok()).unwrap_or(1);
                Some((line, col, c.get(0).map_or("", |m| m.as_str()).to_string()))
            })
            .min_by_key(|(line, col, _)| (*line, *col));
        match (first, status.success()) {
            (Some((line, col, message)), _) => {
                Ok(Diagnostic::error(map_position(&text, &spans, surfaces.len(), line, col), message))
            }
            (None, true) => Ok(Diagnostic::success()),
            (None, false) => Err(BackendError::Crash(format!("exit status {status} without a diagnostic"))),
        }
    }
}
