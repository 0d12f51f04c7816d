use super::{Lang, DEDENT, INDENT, NEW_LINE};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LexKind {
    Keyword,
    Op,
    Ident,
    Int,
    NewLine,
    Indent,
    Dedent,
    /// Anything no rule of the language accepts.
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexeme {
    pub text: String,
    pub kind: LexKind,
    /// Byte offset of the token in the source, for structure tokens the
    /// offset of the line they belong to.
    pub offset: usize,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at byte {offset} (token {token_position})")]
pub struct LexError {
    pub offset: usize,
    /// 1-based position the offending token would have had.
    pub token_position: usize,
    pub message: String,
}

/// Classifies a single token text under `lang`.
pub fn classify(text: &str, lang: Lang) -> LexKind {
    if lang == Lang::MiniP {
        match text {
            NEW_LINE => return LexKind::NewLine,
            INDENT => return LexKind::Indent,
            DEDENT => return LexKind::Dedent,
            _ => {}
        }
    }
    if lang.keywords().contains(&text) {
        return LexKind::Keyword;
    }
    if lang.operators().contains(&text) {
        return LexKind::Op;
    }
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_digit() => {
            if text.chars().all(|c| c.is_ascii_digit()) && text.parse::<i64>().is_ok() {
                LexKind::Int
            } else {
                LexKind::Invalid
            }
        }
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {
            if chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
                LexKind::Ident
            } else {
                LexKind::Invalid
            }
        }
        _ => LexKind::Invalid,
    }
}

pub fn lex(code: &str, lang: Lang) -> Result<Vec<Lexeme>, LexError> {
    match lang {
        Lang::MiniJ => {
            let mut out = Vec::new();
            lex_line(code, 0, 0, 1, lang, &mut out)?;
            Ok(out)
        }
        Lang::MiniP => lex_indented(code),
    }
}

fn lex_indented(code: &str) -> Result<Vec<Lexeme>, LexError> {
    let mut out: Vec<Lexeme> = Vec::new();
    let mut stack = vec![0usize];
    let mut offset = 0usize;
    let mut last_line = 1;
    for (idx, raw) in code.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line_offset = offset;
        offset += raw.len() + 1;
        let indent_len = line.len() - line.trim_start_matches([' ', '\t']).len();
        let content = &line[indent_len..];
        if content.trim().is_empty() {
            continue;
        }
        last_line = line_no;
        let indent = &line[..indent_len];
        if let Some(tab) = indent.find('\t') {
            return Err(LexError {
                offset: line_offset + tab,
                token_position: out.len() + 1,
                message: "tab in indentation".into(),
            });
        }
        let width = indent_len;
        let structure =
            |text: &str, kind| Lexeme { text: text.to_string(), kind, offset: line_offset, line: line_no, col: 1 };
        let top = *stack.last().expect("stack never empty");
        if width > top {
            stack.push(width);
            out.push(structure(INDENT, LexKind::Indent));
        } else if width < top {
            while *stack.last().expect("stack never empty") > width {
                stack.pop();
                out.push(structure(DEDENT, LexKind::Dedent));
            }
            if *stack.last().expect("stack never empty") != width {
                return Err(LexError {
                    offset: line_offset,
                    token_position: out.len() + 1,
                    message: "inconsistent dedent".into(),
                });
            }
        }
        lex_line(content, line_offset + indent_len, line_offset, line_no, Lang::MiniP, &mut out)?;
        out.push(Lexeme {
            text: NEW_LINE.to_string(),
            kind: LexKind::NewLine,
            offset: line_offset + line.len(),
            line: line_no,
            col: line.len() + 1,
        });
    }
    while stack.len() > 1 {
        stack.pop();
        out.push(Lexeme {
            text: DEDENT.to_string(),
            kind: LexKind::Dedent,
            offset: code.len(),
            line: last_line,
            col: 1,
        });
    }
    Ok(out)
}

/// Lexes one stretch of text with no structural meaning for newlines
/// (all of MiniJ, or a single MiniP line). `base` is the byte offset of
/// `text` in the whole source.
fn lex_line(
    text: &str,
    base: usize,
    line_start_abs: usize,
    first_line: usize,
    lang: Lang,
    out: &mut Vec<Lexeme>,
) -> Result<(), LexError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut line = first_line;
    let mut line_start = line_start_abs;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            line += 1;
            i += 1;
            line_start = base + i;
            continue;
        }
        if c == b' ' || c == b'\t' || c == b'\r' {
            i += 1;
            continue;
        }
        let start = i;
        let col = base + start - line_start + 1;
        let err = |msg: &str, out: &Vec<Lexeme>| LexError {
            offset: base + start,
            token_position: out.len() + 1,
            message: msg.to_string(),
        };
        let kind;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            if lang == Lang::MiniP && (word == NEW_LINE || word == INDENT || word == DEDENT) {
                return Err(err("reserved structure name", out));
            }
            kind = if lang.keywords().contains(&word) { LexKind::Keyword } else { LexKind::Ident };
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if text[start..i].parse::<i64>().is_err() {
                return Err(err("integer literal out of range", out));
            }
            kind = LexKind::Int;
        } else {
            let rest = &text[start..];
            let op = lang
                .operators()
                .iter()
                .filter(|op| rest.starts_with(*op))
                .max_by_key(|op| op.len())
                .ok_or_else(|| err(&format!("illegal character {:?}", rest.chars().next().unwrap_or(' ')), out))?;
            i += op.len();
            kind = LexKind::Op;
        }
        out.push(Lexeme { text: text[start..i].to_string(), kind, offset: base + start, line, col });
    }
    Ok(())
}
