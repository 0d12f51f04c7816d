//! Keyword-aware subword tokenizer.
//!
//! Code is first split into lexemes by the language lexer. Lexemes in the
//! atomic set (keywords, operators, structure tokens) map to a single id;
//! identifiers and literals are split by byte-pair merges learned from a
//! corpus. Continuation pieces carry a `##` prefix.

mod bpe;

use crate::minilang::{self, lex, Lang, LexError, DEDENT, INDENT, NEW_LINE};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use thiserror::Error;

pub use bpe::DEFAULT_MAX_MERGES;

const HEADER: &str = "kwtok-vocab v1";
const MERGE_SEPARATOR: &str = "--merges--";

#[derive(Debug, Error)]
pub enum KwTokError {
    #[error("insufficient corpus")]
    InsufficientCorpus,
    #[error("empty keyword list for {0}")]
    EmptyKeywordList(Lang),
    #[error("keyword `{0}` listed twice for {1}")]
    DuplicateKeyword(String, Lang),
    #[error("invalid keyword `{0}`")]
    InvalidKeyword(String),
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("unknown token id {id} at index {index}")]
    UnknownId { index: usize, id: u32 },
    #[error("surface `{0}` cannot be encoded with this vocabulary")]
    Unencodable(String),
    #[error("vocabulary file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Terminal lists per language, the source of the atomic set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordLists {
    pub minij: Vec<String>,
    pub minip: Vec<String>,
}

impl KeywordLists {
    /// The shipped lists from `data/*.keywords`.
    pub fn builtin() -> Self {
        Self {
            minij: parse_keyword_file(include_str!("../../data/minij.keywords")),
            minip: parse_keyword_file(include_str!("../../data/minip.keywords")),
        }
    }

    pub fn new(minij: &[&str], minip: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self { minij: own(minij), minip: own(minip) }
    }

    pub fn get(&self, lang: Lang) -> &[String] {
        match lang {
            Lang::MiniJ => &self.minij,
            Lang::MiniP => &self.minip,
        }
    }
}

/// One terminal per line, `#` starts a comment line.
pub fn parse_keyword_file(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    /// surface → id. Ids are dense in `0..len`.
    pub entries: BTreeMap<String, u32>,
    pub atomic_set: BTreeSet<String>,
    /// Merge rules in rank order, as (left piece, right piece).
    pub base_merges: Vec<(String, String)>,
    surfaces: Vec<String>,
    ranks: HashMap<(String, String), usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub surfaces: Vec<String>,
    pub lang: Lang,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Learns a vocabulary. Corpus texts need not lex: every maximal run of
/// `[A-Za-z0-9_]` that is not itself atomic counts as one word.
pub fn build_vocab<S: AsRef<str>>(
    corpus: &[S],
    keywords: &KeywordLists,
    max_merges: usize,
) -> Result<Vocabulary, KwTokError> {
    let mut atomic_order: Vec<String> = Vec::new();
    for lang in [Lang::MiniJ, Lang::MiniP] {
        let list = keywords.get(lang);
        if list.is_empty() {
            return Err(KwTokError::EmptyKeywordList(lang));
        }
        let mut seen = BTreeSet::new();
        for k in list {
            if k.is_empty() || k.chars().any(char::is_whitespace) || k.starts_with("##") {
                return Err(KwTokError::InvalidKeyword(k.clone()));
            }
            if !seen.insert(k.as_str()) {
                return Err(KwTokError::DuplicateKeyword(k.clone(), lang));
            }
            if !atomic_order.contains(k) {
                atomic_order.push(k.clone());
            }
        }
    }
    for special in [NEW_LINE, INDENT, DEDENT] {
        if !atomic_order.iter().any(|k| k == special) {
            atomic_order.push(special.to_string());
        }
    }
    if corpus.iter().all(|c| c.as_ref().trim().is_empty()) {
        return Err(KwTokError::InsufficientCorpus);
    }
    let atomic: BTreeSet<String> = atomic_order.iter().cloned().collect();

    let mut words: BTreeMap<String, usize> = BTreeMap::new();
    for text in corpus {
        for word in word_runs(text.as_ref()) {
            if !atomic.contains(word) {
                *words.entry(word.to_string()).or_default() += 1;
            }
        }
    }
    let merges = bpe::learn(&words, max_merges);

    let mut surfaces = atomic_order;
    surfaces.extend(bpe::alphabet());
    for (a, b) in &merges {
        surfaces.push(bpe::merged(a, b));
    }
    from_parts(surfaces, atomic, merges)
}

fn word_runs(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).filter(|w| !w.is_empty())
}

/// Assembles a vocabulary from surfaces in id order. Later duplicates of a
/// surface reuse the earlier id, so a merge that spells a keyword maps to
/// the keyword's id.
fn from_parts(
    surfaces: Vec<String>,
    atomic_set: BTreeSet<String>,
    base_merges: Vec<(String, String)>,
) -> Result<Vocabulary, KwTokError> {
    let mut entries = BTreeMap::new();
    let mut dense = Vec::new();
    for s in surfaces {
        if !entries.contains_key(&s) {
            entries.insert(s.clone(), dense.len() as u32);
            dense.push(s);
        }
    }
    let ranks = base_merges.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
    Ok(Vocabulary { entries, atomic_set, base_merges, surfaces: dense, ranks })
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn id(&self, surface: &str) -> Option<u32> {
        self.entries.get(surface).copied()
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn is_atomic(&self, surface: &str) -> bool {
        self.atomic_set.contains(surface)
    }

    /// Splits one non-atomic word into pieces, applying merges by rank.
    pub fn split_word(&self, word: &str) -> Vec<String> {
        bpe::apply(word, &self.ranks)
    }

    /// Encodes already-lexed token texts. Atomic texts become one id; words
    /// become their merge pieces; any other text must be a vocabulary entry.
    pub fn encode_lexemes<S: AsRef<str>>(&self, lexemes: &[S], lang: Lang) -> Result<TokenSeq, KwTokError> {
        let mut seq = TokenSeq { ids: Vec::new(), surfaces: Vec::new(), lang };
        for text in lexemes {
            let text = text.as_ref();
            if self.is_atomic(text) || !minilang::is_word(text) {
                let id = self.id(text).ok_or_else(|| KwTokError::Unencodable(text.to_string()))?;
                seq.ids.push(id);
                seq.surfaces.push(text.to_string());
                continue;
            }
            for piece in self.split_word(text) {
                let id = self.id(&piece).ok_or_else(|| KwTokError::Unencodable(text.to_string()))?;
                seq.ids.push(id);
                seq.surfaces.push(piece);
            }
        }
        Ok(seq)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for (id, s) in self.surfaces.iter().enumerate() {
            out.push_str(&format!("{id}\t{s}\t{}\n", u8::from(self.is_atomic(s))));
        }
        out.push_str(MERGE_SEPARATOR);
        out.push('\n');
        for (a, b) in &self.base_merges {
            out.push_str(&format!("{a}\t{b}\n"));
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Self, KwTokError> {
        let bad = |line: usize, message: &str| KwTokError::Format { line, message: message.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut surfaces = Vec::new();
        let mut atomic = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut in_merges = false;
        let mut merges = Vec::new();
        for (no, line) in lines {
            if !in_merges {
                if line == MERGE_SEPARATOR {
                    in_merges = true;
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                let [id, surface, flag] = fields[..] else { return Err(bad(no, "expected three fields")) };
                if id.parse::<usize>().ok() != Some(surfaces.len()) {
                    return Err(bad(no, "token ids must be dense and in order"));
                }
                if !seen.insert(surface.to_string()) {
                    return Err(bad(no, "surface listed with two ids"));
                }
                match flag {
                    "1" => {
                        atomic.insert(surface.to_string());
                    }
                    "0" => {}
                    _ => return Err(bad(no, "atomic flag must be 0 or 1")),
                }
                surfaces.push(surface.to_string());
            } else {
                let Some((a, b)) = line.split_once('\t') else { return Err(bad(no, "expected merge pair")) };
                if !seen.contains(&bpe::merged(a, b)) {
                    return Err(bad(no, "merge result missing from entries"));
                }
                merges.push((a.to_string(), b.to_string()));
            }
        }
        if !in_merges {
            return Err(bad(text.lines().count(), "missing merge separator"));
        }
        from_parts(surfaces, atomic, merges)
    }

    pub fn save(&self, path: &Path) -> Result<(), KwTokError> {
        Ok(std::fs::write(path, self.to_file_string())?)
    }

    pub fn load(path: &Path) -> Result<Self, KwTokError> {
        Self::from_file_string(&std::fs::read_to_string(path)?)
    }
}

pub fn encode(code: &str, lang: Lang, vocab: &Vocabulary) -> Result<TokenSeq, KwTokError> {
    let lexemes = lex(code, lang)?;
    vocab.encode_lexemes(&lexemes.iter().map(|l| l.text.as_str()).collect::<Vec<_>>(), lang)
}

/// Renders canonical text: pieces are glued back into lexemes, then joined
/// with the language's canonical spacing.
pub fn decode(seq: &TokenSeq, vocab: &Vocabulary) -> Result<String, KwTokError> {
    let mut pieces = Vec::with_capacity(seq.ids.len());
    for (index, &id) in seq.ids.iter().enumerate() {
        let s = vocab.surface(id).ok_or(KwTokError::UnknownId { index, id })?;
        pieces.push(s.to_string());
    }
    let (lexemes, _) = minilang::group_pieces(&pieces);
    Ok(minilang::join_surfaces(&lexemes, seq.lang))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        let corpus = [
            "int count = 0; while (count < 10) { count = count + 1; }",
            "counter = 3\nif counter >= 2:\n  print(counter)\n",
        ];
        build_vocab(&corpus, &KeywordLists::builtin(), 200).unwrap()
    }

    #[test]
    fn keywords_and_operators_are_single_ids() {
        let v = vocab();
        let seq = encode("int x = 1; while (x >= 10) { x = x - 1; }", Lang::MiniJ, &v).unwrap();
        assert!(seq.surfaces.iter().any(|s| s == ">="));
        assert!(seq.surfaces.iter().any(|s| s == "while"));
        assert_eq!(seq.ids.len(), seq.surfaces.len());
        let p = encode("if x:\n  y = 1\n", Lang::MiniP, &v).unwrap();
        for special in [NEW_LINE, INDENT, DEDENT] {
            assert!(p.surfaces.iter().any(|s| s == special));
        }
    }

    #[test]
    fn learned_merges_reassemble_frequent_words() {
        let v = vocab();
        let seq = encode("count", Lang::MiniJ, &v).unwrap();
        assert_eq!(seq.surfaces, ["count"]);
        let unseen = encode("zq", Lang::MiniJ, &v).unwrap();
        assert_eq!(unseen.surfaces, ["z", "##q"]);
    }

    #[test]
    fn merge_spelling_a_keyword_reuses_its_id() {
        let corpus = ["ifa ifa ifb ifb"];
        let v = build_vocab(&corpus, &KeywordLists::builtin(), 1).unwrap();
        assert_eq!(v.base_merges, [("i".to_string(), "##f".to_string())]);
        // The merge result adds no entry of its own.
        assert_eq!(v.len(), v.atomic_set.len() + 126);
        let seq = encode("ifa = 1\nprint(ifa)\n", Lang::MiniP, &v).unwrap();
        assert_eq!(seq.surfaces[..2], ["if", "##a"]);
        assert_eq!(seq.ids[0], v.id("if").unwrap());
        assert_eq!(decode(&seq, &v).unwrap(), "ifa = 1\nprint(ifa)\n");
    }

    #[test]
    fn decode_renders_canonical_text() {
        let v = vocab();
        let seq = v.encode_lexemes(&["x", "=", "1"], Lang::MiniP).unwrap();
        assert_eq!(decode(&seq, &v).unwrap(), "x = 1");
        let empty = TokenSeq { ids: vec![], surfaces: vec![], lang: Lang::MiniJ };
        assert_eq!(decode(&empty, &v).unwrap(), "");
        let bad = TokenSeq { ids: vec![0, 99_999], surfaces: vec![], lang: Lang::MiniJ };
        assert!(matches!(decode(&bad, &v), Err(KwTokError::UnknownId { index: 1, id: 99_999 })));
    }

    #[test]
    fn nested_indentation_round_trips() {
        let v = vocab();
        let code = "x = read()\nif x > 1:\n  while x > 1:\n    x = x - 1\nprint(x)\n";
        let seq = encode(code, Lang::MiniP, &v).unwrap();
        let text = decode(&seq, &v).unwrap();
        assert!(text.contains("\n    x = x - 1\n"));
        assert_eq!(encode(&text, Lang::MiniP, &v).unwrap(), seq);
    }

    #[test]
    fn build_errors() {
        let kw = KeywordLists::builtin();
        let empty: [&str; 0] = [];
        assert!(matches!(build_vocab(&empty, &kw, 10), Err(KwTokError::InsufficientCorpus)));
        let one_sided = KeywordLists::new(&["="], &[]);
        assert!(matches!(build_vocab(&["x = 1"], &one_sided, 10), Err(KwTokError::EmptyKeywordList(Lang::MiniP))));
        let dup = KeywordLists::new(&["=", "="], &["="]);
        assert!(matches!(build_vocab(&["x = 1"], &dup, 10), Err(KwTokError::DuplicateKeyword(_, Lang::MiniJ))));
    }

    #[test]
    fn unlexable_input_reports_offset() {
        let v = vocab();
        match encode("int x = 1 $ 2;", Lang::MiniJ, &v) {
            Err(KwTokError::Lex(e)) => assert_eq!(e.offset, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_format_round_trips_and_validates() {
        let v = vocab();
        let text = v.to_file_string();
        assert!(text.starts_with("kwtok-vocab v1\n0\tint\t1\n"));
        assert_eq!(Vocabulary::from_file_string(&text).unwrap(), v);
        let dup = "kwtok-vocab v1\n0\tx\t0\n1\tx\t0\n--merges--\n";
        assert!(Vocabulary::from_file_string(dup).is_err());
        let gap = "kwtok-vocab v1\n0\tx\t0\n2\ty\t0\n--merges--\n";
        assert!(Vocabulary::from_file_string(gap).is_err());
    }
}
