//! `feedtrans`: corpus generation, evaluation, reward sweeps and toy
//! training runs. Every run writes one JSON manifest next to its output.

mod commands;
mod error;
mod manifest;

use clap::{Args, Parser, Subcommand};
use error::CliError;
use manifest::{beside, Run};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "feedtrans", version, about = "MiniJ to MiniP translation with compiler and test feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a parallel corpus with unit tests and stdin cases.
    GenCorpus(GenCorpusArgs),
    /// Translate every corpus source with a forward policy checkpoint.
    Translate(TranslateArgs),
    /// Score translations against a corpus (CompAcc, FEqAcc, EM, ErrPos, BLEU).
    Evaluate(EvaluateArgs),
    /// Rewards of growing prefixes of a reference program, as CSV.
    RewardSweep(SweepArgs),
    /// Baseline supervised training followed by interleaved SFT/RL rounds.
    Train(TrainArgs),
    /// Move unit-test suites in and out of a corpus.
    #[command(subcommand)]
    TestSuite(SuiteCommand),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// A forward policy checkpoint, or a round directory containing one.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSONL of {"id", "translation"} aligned line by line with the corpus.
    #[arg(long)]
    translations: PathBuf,
    /// Backend config (JSON); the builtin MiniP checker when omitted.
    #[arg(long)]
    backend: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// `.mj` or `.mp` program; the shipped reference program when omitted.
    program: Option<PathBuf>,
    #[arg(long, default_value_t = 80)]
    steps: usize,
    #[arg(long)]
    backend: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config (JSON); defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus to train on; one is generated when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Size of the generated corpus.
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Overrides the config seed; also seeds corpus generation and the
    /// initial policies.
    #[arg(long)]
    seed: Option<u64>,
    /// Supervised epochs on the full logit tables before adapters are attached.
    #[arg(long, default_value_t = 1)]
    baseline_epochs: usize,
    #[arg(long)]
    out: PathBuf,
    /// Validate the config and write the manifest only.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum SuiteCommand {
    /// Write the corpus test cases as {source_id, function, args, expected} lines.
    Export {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace the tests of each named record with the suites from a file.
    Import {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        suites: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

type Job<'a> = &'a dyn Fn(&mut Run) -> Result<String, CliError>;

fn dispatch(command: &Command) -> (Run, Result<String, CliError>) {
    let (mut run, job): (Run, Job) = match command {
        Command::GenCorpus(a) => (Run::new("gen-corpus", beside(&a.out)), &|r| commands::corpus::generate(a, r)),
        Command::Translate(a) => (Run::new("translate", beside(&a.out)), &|r| commands::evaluate::translate(a, r)),
        Command::Evaluate(a) => (Run::new("evaluate", beside(&a.out)), &|r| commands::evaluate::evaluate(a, r)),
        Command::RewardSweep(a) => (Run::new("reward-sweep", beside(&a.out)), &|r| commands::sweep::sweep(a, r)),
        Command::Train(a) => (Run::new("train", a.out.join("manifest.json")), &|r| commands::train::train(a, r)),
        Command::TestSuite(SuiteCommand::Export { corpus, out }) => {
            (Run::new("test-suite export", beside(out)), &|r| commands::corpus::export_suites(corpus, out, r))
        }
        Command::TestSuite(SuiteCommand::Import { corpus, suites, out }) => {
            (Run::new("test-suite import", beside(out)), &|r| commands::corpus::import_suites(corpus, suites, out, r))
        }
    };
    let result = job(&mut run);
    (run, result)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut run, result) = dispatch(&cli.command);
    let status = match &result {
        Ok(status) => status.clone(),
        Err(e) => {
            run.detail("error", e.to_string());
            "error".to_string()
        }
    };
    let written = run.finish(&status);
    match (result, written) {
        (Ok(_), Ok(manifest)) => {
            println!("{}: {} ({:.2} s)", manifest.command, manifest.status, manifest.wall_clock_secs);
            ExitCode::SUCCESS
        }
        (Err(e), _) | (Ok(_), Err(e)) => {
            eprintln!("feedtrans: {e}");
            e.exit_code()
        }
    }
}
