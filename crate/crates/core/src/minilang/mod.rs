//! The two built-in toy languages.
//!
//! MiniJ is statically typed with braces and semicolons; MiniP is dynamically
//! typed and indentation structured. Both share one AST so the interpreter,
//! the test generator and the translators work over a single representation.

mod ast;
mod gen;
mod interp;
mod lexer;
mod parser;
mod render;
mod typing;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use ast::{BinOp, Block, Expr, ExprKind, Function, Param, Program, Span, Stmt, StmtKind, Type, UnOp};
pub use gen::{gen_program, GenConfig};
pub use interp::{apply_int, call_function, call_function_traced, run_program, RuntimeError, Value, DEFAULT_FUEL};
pub use lexer::{classify, lex, LexError, LexKind, Lexeme};
pub use parser::{parse_lexemes, parse_surfaces, parse_text, ParseError};
pub use render::{
    gold_transpile, join_surfaces, render_program, render_surfaces, GoldChooser, Kind, RenderError, RuleChooser,
    CONTEXT_COUNT, KINDS, ROOT_CONTEXT,
};
pub use typing::{infer_types, TypeError};

/// Structure tokens emitted by the MiniP indentation pre-lexer.
pub const NEW_LINE: &str = "NEW_LINE";
pub const INDENT: &str = "INDENT";
pub const DEDENT: &str = "DEDENT";

pub const MINIJ_KEYWORDS: &[&str] = &["int", "bool", "if", "else", "while", "return", "print", "read", "true", "false"];
pub const MINIJ_OPS: &[&str] =
    &["<=", ">=", "==", "!=", "&&", "||", "+", "-", "*", "/", "%", "<", ">", "!", "=", "(", ")", "{", "}", ";", ","];
pub const MINIP_KEYWORDS: &[&str] =
    &["def", "if", "else", "while", "return", "print", "read", "True", "False", "and", "or", "not", "pass"];
pub const MINIP_OPS: &[&str] = &["//", "<=", ">=", "==", "!=", "+", "-", "*", "%", "<", ">", "=", "(", ")", ":", ","];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    MiniJ,
    MiniP,
}

impl Lang {
    pub fn keywords(self) -> &'static [&'static str] {
        match self {
            Lang::MiniJ => MINIJ_KEYWORDS,
            Lang::MiniP => MINIP_KEYWORDS,
        }
    }

    pub fn operators(self) -> &'static [&'static str] {
        match self {
            Lang::MiniJ => MINIJ_OPS,
            Lang::MiniP => MINIP_OPS,
        }
    }

    /// Every terminal that must stay a single token for this language.
    pub fn terminals(self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = self.keywords().iter().chain(self.operators()).copied().collect();
        if self == Lang::MiniP {
            out.extend([NEW_LINE, INDENT, DEDENT]);
        }
        out
    }

    pub fn extension(self) -> &'static str {
        match self {
            Lang::MiniJ => "mj",
            Lang::MiniP => "mp",
        }
    }

    pub fn other(self) -> Lang {
        match self {
            Lang::MiniJ => Lang::MiniP,
            Lang::MiniP => Lang::MiniJ,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Lang::MiniJ => "minij",
            Lang::MiniP => "minip",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "minij" | "mj" => Ok(Lang::MiniJ),
            "minip" | "mp" => Ok(Lang::MiniP),
            other => Err(format!("unknown language `{other}`")),
        }
    }
}

/// Outcome of a compile check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub ok: bool,
    /// 1-based index of the first erroneous token; `None` when `ok`.
    pub first_error_token: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    pub fn success() -> Self {
        Diagnostic { ok: true, first_error_token: None, message: String::new() }
    }

    pub fn error(position: usize, message: impl Into<String>) -> Self {
        Diagnostic { ok: false, first_error_token: Some(position), message: message.into() }
    }
}

/// Checks a token sequence given as surfaces.
///
/// Surfaces may be subword pieces: a piece starting with `##` continues the
/// identifier or literal before it. The reported position indexes the input
/// pieces, pointing at the first piece of the offending lexical token. A
/// sequence that is a viable but incomplete prefix reports its last token.
pub fn check(surfaces: &[String], lang: Lang) -> Diagnostic {
    if surfaces.is_empty() {
        return Diagnostic { ok: false, first_error_token: None, message: "empty program".into() };
    }
    let (lexemes, first_piece) = group_pieces(surfaces);
    match parser::parse_lexemes(&lexemes, lang) {
        Ok(_) => Diagnostic::success(),
        Err(err) => {
            let position = if err.index >= lexemes.len() { surfaces.len() } else { first_piece[err.index] + 1 };
            Diagnostic::error(position, err.message)
        }
    }
}

/// Checks source text.
pub fn check_text(code: &str, lang: Lang) -> Diagnostic {
    match lex(code, lang) {
        Ok(lexemes) => {
            let surfaces: Vec<String> = lexemes.into_iter().map(|l| l.text).collect();
            check(&surfaces, lang)
        }
        Err(err) => Diagnostic::error(err.token_position, err.to_string()),
    }
}

/// Joins `##` continuation pieces onto the preceding word piece. Returns the
/// lexical token texts and, for each, the index of its first piece.
pub fn group_pieces(surfaces: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut lexemes: Vec<String> = Vec::with_capacity(surfaces.len());
    let mut first_piece = Vec::with_capacity(surfaces.len());
    let mut last_is_word = false;
    for (i, piece) in surfaces.iter().enumerate() {
        if let Some(rest) = piece.strip_prefix("##") {
            if last_is_word && !rest.is_empty() {
                lexemes.last_mut().expect("word piece precedes").push_str(rest);
                continue;
            }
            // A stray continuation piece stays a token of its own and fails
            // classification.
            lexemes.push(piece.clone());
            first_piece.push(i);
            last_is_word = false;
            continue;
        }
        last_is_word = is_word(piece);
        lexemes.push(piece.clone());
        first_piece.push(i);
    }
    (lexemes, first_piece)
}

pub(crate) fn is_word(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s != NEW_LINE
        && s != INDENT
        && s != DEDENT
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn keyword_data_files_match_tables() {
        let parse = |text: &str| -> Vec<String> {
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect()
        };
        let mj = parse(include_str!("../../data/minij.keywords"));
        let mp = parse(include_str!("../../data/minip.keywords"));
        assert_eq!(mj, Lang::MiniJ.terminals());
        assert_eq!(mp, Lang::MiniP.terminals());
    }

    #[test]
    fn missing_initializer_reports_fourth_token() {
        let toks = s(&["int", "x", "=", ";", "print", "(", "x", ")", ";"]);
        assert_eq!(check(&toks, Lang::MiniJ).first_error_token, Some(4));
    }

    #[test]
    fn subword_pieces_map_to_first_piece() {
        let toks = s(&["int", "a", "=", "1", ";", "to", "##tal", "=", "1", ";"]);
        let d = check(&toks, Lang::MiniJ);
        assert!(!d.ok);
        assert_eq!(d.first_error_token, Some(6));
    }

    #[test]
    fn truncated_program_blames_last_token() {
        let toks = s(&["int", "f", "(", ")", "{"]);
        assert_eq!(check(&toks, Lang::MiniJ).first_error_token, Some(5));
    }

    #[test]
    fn empty_sequence_is_not_ok() {
        let d = check(&[], Lang::MiniP);
        assert!(!d.ok);
        assert_eq!(d.first_error_token, None);
    }
}
