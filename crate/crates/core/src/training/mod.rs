//! Interleaved supervised and reinforcement fine-tuning of a forward and a
//! backward translation policy.
//!
//! Every round starts both phases from the same entry state, scores each
//! result by back-to-back test-pass feedback on the validation corpus and
//! keeps the better one, preferring the RL phase on ties.

mod adam;
mod checkpoint;
mod loss;
mod phases;

pub use adam::Adam;
pub use checkpoint::{round_dir, META_HEADER};
pub use loss::{ablation_losses, ce_loss, ce_loss_and_grad, floor_penalty, AblationLosses, LossMode, PROB_FLOOR};
pub use phases::{
    eval_b2b, eval_pair, gold_sites, ppo_gradient, reference_kl, rl_epoch, sample_kl, sft_epoch, EpochStats, PpoItem,
};

use crate::corpus::TrainExample;
use crate::feedback::{Backends, FeedbackConfig, FeedbackError, RewardBreakdown};
use crate::kwtok::Vocabulary;
use crate::policy::{GrammarPolicy, PolicyError, ReferencePolicy, DEFAULT_ALPHA, DEFAULT_RANK};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("reference trace is empty")]
    EmptyReference,
    #[error("example `{id}`: {message}")]
    Example { id: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Epochs per phase and round.
    pub epochs: usize,
    pub max_rounds: usize,
    pub lr_sft: f64,
    pub lr_rl: f64,
    pub clip: f64,
    /// Surrogate optimisation steps per rollout batch.
    pub ppo_epochs: usize,
    /// Weight of the old value in the running-mean reward baseline.
    pub baseline_decay: f64,
    /// Rewards averaged uniformly before the baseline switches to the
    /// exponential update.
    pub baseline_warmup: usize,
    pub batch_size: usize,
    /// Convergence threshold on round-to-round validation change.
    pub tol: f64,
    pub seed: u64,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub feedback: FeedbackConfig,
    pub loss: LossMode,
    /// Compiler feedback only: no test-pass term and no backward updates.
    pub cf_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            max_rounds: 20,
            lr_sft: 1e-4,
            lr_rl: 1.41e-5,
            clip: 0.2,
            ppo_epochs: 2,
            baseline_decay: 0.9,
            baseline_warmup: 8,
            batch_size: 8,
            tol: 1e-3,
            seed: 0,
            lora_rank: DEFAULT_RANK,
            lora_alpha: DEFAULT_ALPHA,
            feedback: FeedbackConfig::default(),
            loss: LossMode::Ce,
            cf_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 || self.max_rounds == 0 || self.batch_size == 0 || self.ppo_epochs == 0 {
            return fail("epochs, max_rounds, batch_size and ppo_epochs must be at least 1");
        }
        if !(self.lr_sft > 0.0 && self.lr_rl > 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return fail("clip ratio must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return fail("baseline decay must lie in [0, 1)");
        }
        if !(self.tol > 0.0) || self.lora_rank == 0 || !(self.lora_alpha > 0.0) {
            return fail("tolerance, LoRA rank and LoRA alpha must be positive");
        }
        self.feedback.validate()?;
        self.loss.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serialises")))
    }
}

/// Scalar reward baseline: a plain mean over the first `warmup` rewards,
/// then an exponential moving average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub value: f64,
    pub count: u64,
}

impl Baseline {
    pub fn new() -> Self {
        Self { value: 0.0, count: 0 }
    }

    /// `reward - baseline`, or 0 before any reward has been seen.
    pub fn advantage(&self, reward: f64) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            reward - self.value
        }
    }

    pub fn observe(&mut self, reward: f64, decay: f64, warmup: usize) {
        self.count += 1;
        if self.count <= warmup.max(1) as u64 {
            self.value += (reward - self.value) / self.count as f64;
        } else {
            self.value = decay * self.value + (1.0 - decay) * reward;
        }
    }
}

impl Default for Baseline {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub sft_fwd: Adam,
    pub sft_bwd: Adam,
    pub rl_fwd: Adam,
    pub rl_bwd: Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sft,
    Rl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub val_sft: f64,
    pub val_rl: f64,
    pub kept: Phase,
    /// Parameter hashes of both phase outputs.
    pub sft_hash: String,
    pub rl_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Sft { round: usize, epoch: usize, id: String, ce_fwd: f64, ce_bwd: Option<f64>, skipped: Option<String> },
    Rl { round: usize, epoch: usize, id: String, reward: RewardBreakdown, backend_error: bool },
    Round(RoundRecord),
}

pub fn write_log_jsonl<W: std::io::Write>(records: &[LogRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Everything the training loop reads from outside the state.
pub struct TrainEnv<'a> {
    pub vocab: &'a Vocabulary,
    pub backends: Backends<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub forward: GrammarPolicy,
    pub backward: GrammarPolicy,
    ref_forward: ReferencePolicy,
    ref_backward: ReferencePolicy,
    pub optimizers: Optimizers,
    pub baseline_fwd: Baseline,
    pub baseline_bwd: Baseline,
    pub rounds: usize,
    pub sft_epochs: usize,
    pub rl_epochs: usize,
    history: Vec<RoundRecord>,
}

fn mix(parts: &[u64]) -> u64 {
    // SplitMix64 folded over the parts.
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

impl TrainState {
    /// References are snapshots of the given policies; unwrapped policies
    /// are then wrapped with fresh adapters.
    pub fn new(forward: GrammarPolicy, backward: GrammarPolicy, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let wrap = |p: GrammarPolicy, tag: u64| -> Result<GrammarPolicy, TrainError> {
            if p.is_wrapped() {
                Ok(p)
            } else {
                Ok(p.apply_lora(cfg.lora_rank, cfg.lora_alpha, mix(&[cfg.seed, tag]))?)
            }
        };
        let (rf, rb) = (forward.snapshot_reference(), backward.snapshot_reference());
        Ok(Self::assemble(wrap(forward, 1)?, wrap(backward, 2)?, rf, rb))
    }

    /// A state that trains the full logit matrices directly, used for
    /// baseline supervised training before adapters are attached.
    pub fn unwrapped(forward: GrammarPolicy, backward: GrammarPolicy) -> Self {
        let (rf, rb) = (forward.snapshot_reference(), backward.snapshot_reference());
        Self::assemble(forward, backward, rf, rb)
    }

    fn assemble(forward: GrammarPolicy, backward: GrammarPolicy, rf: ReferencePolicy, rb: ReferencePolicy) -> Self {
        let (nf, nb) = (forward.num_params(), backward.num_params());
        TrainState {
            forward,
            backward,
            ref_forward: rf,
            ref_backward: rb,
            optimizers: Optimizers {
                sft_fwd: Adam::new(nf),
                sft_bwd: Adam::new(nb),
                rl_fwd: Adam::new(nf),
                rl_bwd: Adam::new(nb),
            },
            baseline_fwd: Baseline::new(),
            baseline_bwd: Baseline::new(),
            rounds: 0,
            sft_epochs: 0,
            rl_epochs: 0,
            history: Vec::new(),
        }
    }

    pub fn ref_forward(&self) -> &ReferencePolicy {
        &self.ref_forward
    }

    pub fn ref_backward(&self) -> &ReferencePolicy {
        &self.ref_backward
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    /// SHA-256 over the checkpoint text of both policies.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.forward.to_checkpoint_string());
        h.update(self.backward.to_checkpoint_string());
        hex::encode(h.finalize())
    }

    pub(crate) fn seed_for(&self, cfg: &TrainConfig, parts: &[u64]) -> u64 {
        let mut all = vec![cfg.seed, self.rounds as u64];
        all.extend_from_slice(parts);
        mix(&all)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStatus {
    Converged,
    MaxRounds,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<LogRecord>,
    pub status: TrainStatus,
}

fn converged(history: &[RoundRecord], tol: f64) -> bool {
    match history {
        [.., a, b] => (b.val_sft - a.val_sft).abs() < tol && (b.val_rl - a.val_rl).abs() < tol,
        _ => false,
    }
}

/// Runs rounds until both validation scores change by less than `tol`
/// between consecutive rounds or `max_rounds` rounds have been recorded.
pub fn interleaved_train(
    state: TrainState,
    train: &[TrainExample],
    val: &[TrainExample],
    cfg: &TrainConfig,
    env: &TrainEnv,
) -> Result<TrainOutcome, TrainError> {
    let mut eval = |s: &TrainState, _: Phase| Ok(eval_b2b(s, val, cfg, env));
    interleaved_train_with(state, train, cfg, env, &mut eval, &mut |_| Ok(()))
}

/// [`interleaved_train`] with the validation score supplied by `eval` and a
/// hook called with the kept state after every round.
pub fn interleaved_train_with(
    mut state: TrainState,
    train: &[TrainExample],
    cfg: &TrainConfig,
    env: &TrainEnv,
    eval: &mut dyn FnMut(&TrainState, Phase) -> Result<f64, TrainError>,
    on_round: &mut dyn FnMut(&TrainState) -> Result<(), TrainError>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut log = Vec::new();
    let mut status = TrainStatus::MaxRounds;
    while state.rounds < cfg.max_rounds {
        let mut sft = state.clone();
        for _ in 0..cfg.epochs {
            log.extend(sft_epoch(&mut sft, train, cfg, env)?.records);
        }
        let val_sft = eval(&sft, Phase::Sft)?;
        let mut rl = state.clone();
        for _ in 0..cfg.epochs {
            log.extend(rl_epoch(&mut rl, train, cfg, env)?.records);
        }
        let val_rl = eval(&rl, Phase::Rl)?;
        let kept = if val_rl >= val_sft { Phase::Rl } else { Phase::Sft };
        let record = RoundRecord {
            round: state.rounds + 1,
            val_sft,
            val_rl,
            kept,
            sft_hash: sft.param_hash(),
            rl_hash: rl.param_hash(),
        };
        state = if kept == Phase::Rl { rl } else { sft };
        state.rounds += 1;
        state.history.push(record.clone());
        log.push(LogRecord::Round(record));
        on_round(&state)?;
        if converged(&state.history, cfg.tol) {
            status = TrainStatus::Converged;
            break;
        }
    }
    Ok(TrainOutcome { state, log, status })
}

/// Supervised phases only, `rounds · epochs` epochs in total. The round
/// counter advances as in [`interleaved_train`] so seeds line up.
pub fn sft_only_train(
    mut state: TrainState,
    train: &[TrainExample],
    rounds: usize,
    cfg: &TrainConfig,
    env: &TrainEnv,
) -> Result<(TrainState, Vec<LogRecord>), TrainError> {
    let mut log = Vec::new();
    for _ in 0..rounds {
        for _ in 0..cfg.epochs {
            log.extend(sft_epoch(&mut state, train, cfg, env)?.records);
        }
        state.rounds += 1;
    }
    Ok((state, log))
}
