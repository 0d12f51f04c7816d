use super::{SuiteStats, TestCase, TestSuite};
use crate::minilang::{call_function, Function, Program, Value};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

fn bigrams(name: &str) -> BTreeSet<(char, char)> {
    let chars: Vec<char> = name.to_lowercase().chars().collect();
    chars.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Jaccard similarity of the lowercase character-bigram sets. Names too
/// short to have bigrams are similar only when equal.
pub fn jaccard_bigrams(a: &str, b: &str) -> f64 {
    let (x, y) = (bigrams(a), bigrams(b));
    let union = x.union(&y).count();
    if union == 0 {
        return if a.to_lowercase() == b.to_lowercase() { 1.0 } else { 0.0 };
    }
    x.intersection(&y).count() as f64 / union as f64
}

/// The candidate function whose name is most similar to `name`; an exact
/// name wins outright, other ties go to the earliest function.
pub fn match_function<'p>(name: &str, candidate: &'p Program) -> Option<&'p Function> {
    if let Some(f) = candidate.function(name) {
        return Some(f);
    }
    let mut best: Option<(&Function, f64)> = None;
    for f in &candidate.functions {
        let s = jaccard_bigrams(name, &f.name);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((f, s));
        }
    }
    best.map(|(f, _)| f)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum Verdict {
    Pass,
    WrongValue { got: Value },
    RuntimeFailure { code: String },
    NoFunction,
    NoCompile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub function: String,
    /// The candidate function the case ran against, if any matched.
    pub matched: Option<String>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteRun {
    pub passes: usize,
    pub verdicts: Vec<CaseVerdict>,
}

/// Runs every case against the matched candidate function. `None` stands
/// for a candidate that does not compile.
pub fn run_suite(suite: &TestSuite, candidate: Option<&Program>, fuel: u64) -> SuiteRun {
    let mut matches: HashMap<&str, Option<&Function>> = HashMap::new();
    let verdicts: Vec<CaseVerdict> = suite
        .cases
        .iter()
        .map(|case| {
            let Some(program) = candidate else {
                return CaseVerdict { function: case.function.clone(), matched: None, verdict: Verdict::NoCompile };
            };
            let matched = *matches.entry(&case.function).or_insert_with(|| match_function(&case.function, program));
            let verdict = match matched {
                None => Verdict::NoFunction,
                Some(f) => match call_function(program, &f.name, &case.args, fuel) {
                    Ok(v) if v == case.expected => Verdict::Pass,
                    Ok(got) => Verdict::WrongValue { got },
                    Err(e) => Verdict::RuntimeFailure { code: e.code().to_string() },
                },
            };
            CaseVerdict { function: case.function.clone(), matched: matched.map(|f| f.name.clone()), verdict }
        })
        .collect();
    SuiteRun { passes: verdicts.iter().filter(|v| v.verdict == Verdict::Pass).count(), verdicts }
}

#[derive(Serialize, Deserialize)]
struct Record {
    source_id: String,
    function: String,
    args: Vec<Value>,
    expected: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    path: Vec<(usize, bool)>,
}

/// One JSON record per test case.
pub fn write_suites_jsonl<W: Write>(suites: &[TestSuite], mut out: W) -> io::Result<()> {
    for suite in suites {
        for case in &suite.cases {
            let rec = Record {
                source_id: suite.source_id.clone(),
                function: case.function.clone(),
                args: case.args.clone(),
                expected: case.expected,
                path: case.path.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Groups records into suites by source id, in order of first appearance.
/// Path statistics are not part of the format and come back empty.
pub fn read_suites_jsonl<R: BufRead>(input: R) -> io::Result<Vec<TestSuite>> {
    let mut suites: Vec<TestSuite> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", no + 1)))?;
        let i = *index.entry(rec.source_id.clone()).or_insert_with(|| {
            suites.push(TestSuite {
                source_id: rec.source_id.clone(),
                cases: Vec::new(),
                stats: SuiteStats::default(),
            });
            suites.len() - 1
        });
        suites[i].cases.push(TestCase {
            function: rec.function,
            args: rec.args,
            expected: rec.expected,
            path: rec.path,
        });
    }
    Ok(suites)
}
