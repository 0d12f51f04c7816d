//! End-to-end runs of the `feedtrans` binary.

use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn feedtrans(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feedtrans")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn write_jsonl(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

fn corpus(dir: &Path, count: usize, seed: u64) -> Vec<Value> {
    let out =
        feedtrans(&["gen-corpus", "--count", &count.to_string(), "--seed", &seed.to_string(), "--out", "c.jsonl"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    jsonl(&dir.join("c.jsonl"))
}

fn aggregate(dir: &Path) -> Value {
    jsonl(&dir.join("r.jsonl")).pop().unwrap()["aggregate"].clone()
}

#[test]
fn gold_translations_score_full_marks() {
    let dir = tempfile::tempdir().unwrap();
    let records = corpus(dir.path(), 40, 1);
    let gold: Vec<Value> = records.iter().map(|r| json!({ "id": r["id"], "translation": r["target"] })).collect();
    write_jsonl(&dir.path().join("t.jsonl"), &gold);
    let out =
        feedtrans(&["evaluate", "--corpus", "c.jsonl", "--translations", "t.jsonl", "--out", "r.jsonl"], dir.path());
    assert_eq!(code(&out), 0);
    let a = aggregate(dir.path());
    assert_eq!((a["n"].as_u64(), a["comp_acc"].as_f64(), a["feq_acc"].as_f64()), (Some(40), Some(100.0), Some(100.0)));
    assert_eq!(jsonl(&dir.path().join("r.jsonl")).len(), 41);
    let m = read_json(dir.path().join("r.jsonl.manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn mixed_fixture_has_counted_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let records = corpus(dir.path(), 10, 1);
    let gold = |i: usize| records[i]["target"].as_str().unwrap().to_string();
    // Verdicts per line: (compiles, io_equivalent, exact_match).
    let hyps = [
        gold(0),                           // yes yes yes
        gold(1),                           // yes yes yes
        gold(2),                           // yes yes yes
        gold(3),                           // yes yes yes
        "print(0)\n".to_string(),          // yes no no: expected output is never a lone 0
        "print(0)\n".to_string(),          // yes no no
        format!("{})\n", gold(6)),         // no no no
        "@@ ##".to_string(),               // no no no: does not lex
        String::new(),                     // no no no
        gold(9).replace(" = ", "   =   "), // yes yes yes: spacing only
    ];
    let rows: Vec<Value> = records.iter().zip(&hyps).map(|(r, h)| json!({ "id": r["id"], "translation": h })).collect();
    write_jsonl(&dir.path().join("t.jsonl"), &rows);
    let out =
        feedtrans(&["evaluate", "--corpus", "c.jsonl", "--translations", "t.jsonl", "--out", "r.jsonl"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let per = jsonl(&dir.path().join("r.jsonl"));
    let verdicts: Vec<(bool, bool, bool)> = per[..10]
        .iter()
        .map(|r| {
            (
                r["compiles"].as_bool().unwrap(),
                r["io_equivalent"].as_bool().unwrap(),
                r["exact_match"].as_bool().unwrap(),
            )
        })
        .collect();
    let (y, n) = (true, false);
    assert_eq!(
        verdicts,
        [(y, y, y), (y, y, y), (y, y, y), (y, y, y), (y, n, n), (y, n, n), (n, n, n), (n, n, n), (n, n, n), (y, y, y)]
    );
    let a = aggregate(dir.path());
    assert_eq!((a["comp_acc"].as_f64(), a["feq_acc"].as_f64(), a["em"].as_f64()), (Some(70.0), Some(50.0), Some(50.0)));
    assert_eq!(a["backend_failures"], 0);
}

#[test]
fn malformed_translation_line_exits_2_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let records = corpus(dir.path(), 5, 3);
    let mut text: String =
        records.iter().take(3).map(|r| format!("{}\n", json!({ "id": r["id"], "translation": r["target"] }))).collect();
    text.push_str("{\"id\": \"ex-00003\", \"translation\": \n");
    std::fs::write(dir.path().join("t.jsonl"), text).unwrap();
    let out =
        feedtrans(&["evaluate", "--corpus", "c.jsonl", "--translations", "t.jsonl", "--out", "r.jsonl"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    assert!(!dir.path().join("r.jsonl").exists());
    assert_eq!(read_json(dir.path().join("r.jsonl.manifest.json"))["status"], "error");

    // Misaligned ids and a corrupted corpus are input errors too.
    let rows = vec![json!({ "id": "ex-00001", "translation": "" })];
    write_jsonl(&dir.path().join("t.jsonl"), &rows);
    let out =
        feedtrans(&["evaluate", "--corpus", "c.jsonl", "--translations", "t.jsonl", "--out", "r.jsonl"], dir.path());
    assert_eq!(code(&out), 2);
    std::fs::write(dir.path().join("c.jsonl"), "{\"id\": 1}\n").unwrap();
    let out =
        feedtrans(&["evaluate", "--corpus", "c.jsonl", "--translations", "t.jsonl", "--out", "r.jsonl"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn missing_input_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = feedtrans(&["evaluate", "--corpus", "nope.jsonl", "--translations", "t", "--out", "r.jsonl"], dir.path());
    assert_eq!(code(&out), 2);
    assert_eq!(code(&feedtrans(&["gen-corpus", "--frobnicate"], dir.path())), 2);
    assert_eq!(code(&feedtrans(&["gen-corpus", "--count", "0", "--out", "c.jsonl"], dir.path())), 2);
}

#[test]
fn corpus_generation_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(corpus(a.path(), 12, 8), corpus(b.path(), 12, 8));
    let (ma, mb) =
        (read_json(a.path().join("c.jsonl.manifest.json")), read_json(b.path().join("c.jsonl.manifest.json")));
    assert_eq!(ma["outputs"][0]["sha256"], mb["outputs"][0]["sha256"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["seed"], 8);
    assert_eq!(ma["tool_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn sweep_of_the_sample_program() {
    let dir = tempfile::tempdir().unwrap();
    let out = feedtrans(&["reward-sweep", "--out", "s.csv"], dir.path());
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("fraction,omega_cf,compiler_bool,sm,dm"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 80);
    let last = rows.last().unwrap();
    assert_eq!((last[0], last[1], last[2]), (1.0, 2.0, 1.0));
    assert!(rows[..79].iter().all(|r| r[2] == -1.0));
    let mut distinct: Vec<u64> = rows.iter().map(|r| r[1].to_bits()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    assert!(distinct.len() >= 40, "{} distinct values", distinct.len());
}

#[test]
fn sweep_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&feedtrans(&["reward-sweep", "--steps", "1", "--out", "s.csv"], dir.path())), 2);
    std::fs::write(dir.path().join("broken.mj"), "print(1 +);").unwrap();
    assert_eq!(code(&feedtrans(&["reward-sweep", "broken.mj", "--out", "s.csv"], dir.path())), 2);
    std::fs::write(dir.path().join("prog.txt"), "print(1);").unwrap();
    assert_eq!(code(&feedtrans(&["reward-sweep", "prog.txt", "--out", "s.csv"], dir.path())), 2);
    std::fs::write(dir.path().join("ok.mp"), "print(1 + 2)\n").unwrap();
    let out = feedtrans(&["reward-sweep", "ok.mp", "--steps", "4", "--out", "s.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dry_run_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"lr_sft": 0.01, "lr_rl": 0.01}"#).unwrap();
    let out = feedtrans(&["train", "--config", "cfg.json", "--out", "run", "--dry-run"], dir.path());
    assert_eq!(code(&out), 0);
    let entries: Vec<_> = std::fs::read_dir(dir.path().join("run")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, ["manifest.json"]);
    let m = read_json(dir.path().join("run/manifest.json"));
    assert_eq!(m["status"], "dry-run");
    assert_eq!(m["params"]["config"]["lr_sft"], 0.01);
    assert!(m["outputs"].as_array().unwrap().is_empty());
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [("zero.json", r#"{"lr_sft": 0.0}"#), ("typo.json", r#"{"lr_sfd": 0.1}"#), ("junk.json", "[")] {
        std::fs::write(dir.path().join(name), text).unwrap();
        let out = feedtrans(&["train", "--config", name, "--out", "run", "--dry-run"], dir.path());
        assert_eq!(code(&out), 2, "{name}");
    }
}

fn train_hashes(dir: &Path) -> (Vec<(String, String)>, Value) {
    std::fs::write(dir.join("cfg.json"), r#"{"lr_sft": 0.01, "lr_rl": 0.01, "max_rounds": 2}"#).unwrap();
    let out = feedtrans(&["train", "--config", "cfg.json", "--count", "30", "--seed", "4", "--out", "run"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(dir.join("run/manifest.json"));
    let outputs = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect();
    (outputs, m)
}

#[test]
fn training_is_reproducible_and_checkpoints_translate() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ha, m) = train_hashes(a.path());
    let (hb, _) = train_hashes(b.path());
    assert_eq!(ha, hb);
    assert!(["converged", "max-rounds"].contains(&m["status"].as_str().unwrap()));
    let rounds = m["details"]["rounds"].as_u64().unwrap() as usize;
    for r in 0..=rounds {
        for f in ["forward", "backward", "meta"] {
            assert!(a.path().join(format!("run/round-{r:02}/{f}")).exists());
        }
    }
    let log = jsonl(&a.path().join("run/log.jsonl"));
    assert_eq!(log.iter().filter(|l| l["record"] == "round").count(), rounds);
    assert!(log.iter().any(|l| l["record"] == "rl"));

    let policy = format!("run/round-{rounds:02}");
    let out =
        feedtrans(&["translate", "--corpus", "run/corpus.jsonl", "--policy", &policy, "--out", "t.jsonl"], a.path());
    assert_eq!(code(&out), 0);
    let out = feedtrans(
        &["evaluate", "--corpus", "run/corpus.jsonl", "--translations", "t.jsonl", "--out", "r.jsonl"],
        a.path(),
    );
    assert_eq!(code(&out), 0);
    assert_eq!(aggregate(a.path())["n"], 30);
    // A backward checkpoint is not a forward translator.
    let out = feedtrans(
        &["translate", "--corpus", "run/corpus.jsonl", "--policy", &format!("{policy}/backward"), "--out", "t.jsonl"],
        a.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn suites_round_trip_through_export_and_import() {
    let dir = tempfile::tempdir().unwrap();
    let records = corpus(dir.path(), 8, 5);
    let out = feedtrans(&["test-suite", "export", "--corpus", "c.jsonl", "--out", "s.jsonl"], dir.path());
    assert_eq!(code(&out), 0);
    let cases = jsonl(&dir.path().join("s.jsonl"));
    assert_eq!(cases.len(), records.iter().map(|r| r["tests"].as_array().unwrap().len()).sum::<usize>());
    assert!(cases.iter().all(|c| c["source_id"].is_string() && c["function"].is_string() && c["args"].is_array()));

    // Replace one record's suite with its first case only.
    let id = cases[0]["source_id"].clone();
    write_jsonl(&dir.path().join("one.jsonl"), &cases[..1]);
    let out = feedtrans(
        &["test-suite", "import", "--corpus", "c.jsonl", "--suites", "one.jsonl", "--out", "c2.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let updated = jsonl(&dir.path().join("c2.jsonl"));
    for (old, new) in records.iter().zip(&updated) {
        let want = if old["id"] == id { 1 } else { old["tests"].as_array().unwrap().len() };
        assert_eq!(new["tests"].as_array().unwrap().len(), want);
    }

    let mut stray = cases[0].clone();
    stray["source_id"] = json!("ex-99999");
    write_jsonl(&dir.path().join("stray.jsonl"), &[stray]);
    let out = feedtrans(
        &["test-suite", "import", "--corpus", "c.jsonl", "--suites", "stray.jsonl", "--out", "c3.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
}
