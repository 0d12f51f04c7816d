use super::{jsonl, load_corpus};
use crate::error::{Classify, CliError};
use crate::manifest::Run;
use crate::TrainArgs;
use feedtrans_core::corpus::{corpus_vocab, generate_corpus, tokenize_corpus, write_corpus_jsonl, CorpusConfig};
use feedtrans_core::policy::CorruptConfig;
use feedtrans_core::training::{eval_b2b, interleaved_train_with, round_dir, sft_epoch, TrainStatus};
use feedtrans_core::{Backends, CompileBackend, Direction, GrammarPolicy, Lang, TrainConfig, TrainEnv, TrainState};
use serde_json::json;
use std::path::Path;

/// Share of the corpus held out for validation (the tail of the file).
const VAL_FRACTION: f64 = 0.2;

/// Logit margin of the faithful policies before corruption.
const FAITHFUL_MARGIN: f64 = 2.0;

/// Stand-ins for pretrained translators: faithful grammars with a seeded
/// share of wrong rule preferences.
fn initial_policies(seed: u64) -> Result<(GrammarPolicy, GrammarPolicy), CliError> {
    let c = CorruptConfig::default();
    let forward = GrammarPolicy::faithful(Direction::Forward, FAITHFUL_MARGIN).corrupted(&c, seed);
    let backward = GrammarPolicy::faithful(Direction::Backward, FAITHFUL_MARGIN).corrupted(&c, seed.wrapping_add(100));
    Ok((forward.internal("initial policy")?, backward.internal("initial policy")?))
}

fn record_checkpoint(dir: &Path, run: &mut Run) -> Result<(), CliError> {
    for name in ["forward", "backward", "meta"] {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).internal(&format!("reading back {}", path.display()))?;
        run.record_output(&path, &bytes);
    }
    Ok(())
}

pub fn train(args: &TrainArgs, run: &mut Run) -> Result<String, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let bytes = run.read_input(path)?;
            serde_json::from_slice::<TrainConfig>(&bytes).input(&path.display().to_string())?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    run.seed = Some(cfg.seed);
    let corpus_cfg = CorpusConfig::default();
    run.set_params(&json!({
        "config": cfg,
        "baseline_epochs": args.baseline_epochs,
        "val_fraction": VAL_FRACTION,
        "corrupt": CorruptConfig::default(),
        "faithful_margin": FAITHFUL_MARGIN,
        "generated_corpus": args.corpus.is_none().then(|| json!({ "count": args.count, "corpus": corpus_cfg })),
    }));
    cfg.validate().input("config")?;
    run.detail("train_config_hash", cfg.hash());
    if args.dry_run {
        return Ok("dry-run".into());
    }

    let records = match &args.corpus {
        Some(path) => load_corpus(path, run)?,
        None => {
            let records = generate_corpus(args.count, cfg.seed, &corpus_cfg);
            let mut bytes = Vec::new();
            write_corpus_jsonl(&records, &mut bytes).internal("serialising corpus")?;
            run.write_output(&args.out.join("corpus.jsonl"), &bytes)?;
            records
        }
    };
    if records.len() < 2 {
        return Err(CliError::Input("training needs at least two corpus records".into()));
    }
    let vocab = corpus_vocab(&records).input("building vocabulary")?;
    let examples = tokenize_corpus(&records, &vocab).input("tokenizing corpus")?;
    let n_val = ((examples.len() as f64 * VAL_FRACTION).round() as usize).clamp(1, examples.len() - 1);
    let (train, val) = examples.split_at(examples.len() - n_val);
    let (target, source) = (CompileBackend::builtin(Lang::MiniP), CompileBackend::builtin(Lang::MiniJ));
    let env = TrainEnv { vocab: &vocab, backends: Backends { target: &target, source: &source } };

    let (forward, backward) = initial_policies(cfg.seed)?;
    let mut baseline = TrainState::unwrapped(forward, backward);
    let mut log = Vec::new();
    for _ in 0..args.baseline_epochs {
        log.extend(sft_epoch(&mut baseline, train, &cfg, &env).internal("baseline SFT")?.records);
    }
    let state = TrainState::new(baseline.forward, baseline.backward, &cfg).internal("attaching adapters")?;
    let entry = eval_b2b(&state, val, &cfg, &env);
    println!("entry: val {entry:.4}");
    state.save_round(&args.out).internal("writing checkpoint")?;

    let mut eval = |s: &TrainState, _| Ok(eval_b2b(s, val, &cfg, &env));
    let mut on_round = |s: &TrainState| {
        let r = s.history().last().expect("a round was recorded");
        println!("round {:>2}: val SFT {:.4}  val RL {:.4}  kept {:?}", r.round, r.val_sft, r.val_rl, r.kept);
        s.save_round(&args.out).map(|_| ())
    };
    let out = interleaved_train_with(state, train, &cfg, &env, &mut eval, &mut on_round).internal("training")?;
    log.extend(out.log);
    for round in 0..=out.state.rounds {
        record_checkpoint(&round_dir(&args.out, round), run)?;
    }
    run.write_output(&args.out.join("log.jsonl"), &jsonl(&log))?;

    let fin = out.state.history().last().map(|r| r.val_sft.max(r.val_rl)).unwrap_or(entry);
    run.detail("train_examples", train.len());
    run.detail("val_examples", val.len());
    run.detail("entry_val", entry);
    run.detail("final_val", fin);
    run.detail("rounds", out.state.rounds);
    run.detail("history", out.state.history());
    run.detail("param_hash", out.state.param_hash());
    Ok(match out.status {
        TrainStatus::Converged => "converged",
        TrainStatus::MaxRounds => "max-rounds",
    }
    .into())
}
