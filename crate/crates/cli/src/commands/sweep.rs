use super::load_backend;
use crate::error::{Classify, CliError};
use crate::manifest::Run;
use crate::SweepArgs;
use feedtrans_core::feedback::FeedbackError;
use feedtrans_core::kwtok::{build_vocab, encode, KeywordLists, DEFAULT_MAX_MERGES};
use feedtrans_core::metrics::{reward_sweep, SAMPLE_PROGRAM};
use feedtrans_core::Lang;
use serde_json::json;

fn lang_of(path: &std::path::Path) -> Result<Lang, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mj") => Ok(Lang::MiniJ),
        Some("mp") => Ok(Lang::MiniP),
        _ => Err(CliError::Input(format!("{}: expected a .mj or .mp file", path.display()))),
    }
}

pub fn sweep(args: &SweepArgs, run: &mut Run) -> Result<String, CliError> {
    run.set_params(&json!({ "steps": args.steps }));
    let (code, lang) = match &args.program {
        Some(path) => {
            let lang = lang_of(path)?;
            let bytes = run.read_input(path)?;
            (String::from_utf8(bytes).input(&path.display().to_string())?, lang)
        }
        None => {
            run.record_input("<builtin sample program>", SAMPLE_PROGRAM.as_bytes());
            (SAMPLE_PROGRAM.to_string(), Lang::MiniJ)
        }
    };
    let backend = load_backend(args.backend.as_deref(), lang, run)?;
    let vocab =
        build_vocab(&[code.as_str()], &KeywordLists::builtin(), DEFAULT_MAX_MERGES).input("tokenizing program")?;
    let t = encode(&code, lang, &vocab).input("tokenizing program")?;
    let rows = reward_sweep(&t, args.steps, &backend).map_err(|e| match e {
        FeedbackError::InvalidConfig(m) => CliError::Input(m),
        other => CliError::Internal(other.to_string()),
    })?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).internal("writing CSV")?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error()).internal("writing CSV")?;
    run.write_output(&args.out, &bytes)?;
    run.detail("tokens", t.len());
    run.detail("rows", rows.len());
    Ok("ok".into())
}
