use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_MAX_MERGES: usize = 2000;

const CONTINUATION: &str = "##";

/// Every word character in initial and continuation form.
pub(super) fn alphabet() -> Vec<String> {
    let chars: Vec<char> = ('a'..='z').chain('A'..='Z').chain('0'..='9').chain(['_']).collect();
    let initial = chars.iter().map(|c| c.to_string());
    let cont = chars.iter().map(|c| format!("{CONTINUATION}{c}"));
    initial.chain(cont).collect()
}

pub(super) fn merged(a: &str, b: &str) -> String {
    format!("{a}{}", b.strip_prefix(CONTINUATION).unwrap_or(b))
}

fn initial_pieces(word: &str) -> Vec<String> {
    word.chars().enumerate().map(|(i, c)| if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") }).collect()
}

/// Replaces every non-overlapping occurrence of `(a, b)`, scanning left to right.
fn merge_in(pieces: &mut Vec<String>, a: &str, b: &str) {
    let mut out = Vec::with_capacity(pieces.len());
    let mut i = 0;
    while i < pieces.len() {
        if i + 1 < pieces.len() && pieces[i] == a && pieces[i + 1] == b {
            out.push(merged(a, b));
            i += 2;
        } else {
            out.push(std::mem::take(&mut pieces[i]));
            i += 1;
        }
    }
    *pieces = out;
}

/// Greedy merge learning: take the most frequent adjacent pair (ties to the
/// lexicographically smallest), stop once no pair occurs twice.
pub(super) fn learn(words: &BTreeMap<String, usize>, max_merges: usize) -> Vec<(String, String)> {
    let mut split: Vec<(Vec<String>, usize)> = words.iter().map(|(w, &n)| (initial_pieces(w), n)).collect();
    let mut merges = Vec::new();
    while merges.len() < max_merges {
        let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (pieces, n) in &split {
            for pair in pieces.windows(2) {
                *counts.entry((pair[0].as_str(), pair[1].as_str())).or_default() += n;
            }
        }
        let mut best: Option<((&str, &str), usize)> = None;
        for (pair, n) in counts {
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((pair, n));
            }
        }
        let Some(((a, b), n)) = best else { break };
        if n < 2 {
            break;
        }
        let (a, b) = (a.to_string(), b.to_string());
        for (pieces, _) in &mut split {
            merge_in(pieces, &a, &b);
        }
        merges.push((a, b));
    }
    merges
}

/// Applies learned merges to one word, lowest rank first.
pub(super) fn apply(word: &str, ranks: &HashMap<(String, String), usize>) -> Vec<String> {
    let mut pieces = initial_pieces(word);
    loop {
        let best = pieces
            .windows(2)
            .filter_map(|p| ranks.get(&(p[0].clone(), p[1].clone())).map(|&r| (r, p[0].clone(), p[1].clone())))
            .min();
        let Some((_, a, b)) = best else { return pieces };
        merge_in(&mut pieces, &a, &b);
    }
}
