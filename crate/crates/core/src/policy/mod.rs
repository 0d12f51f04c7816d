//! A trainable stochastic translator over the rule table of the renderer.
//!
//! All logits live in one matrix with a bias row followed by one row per
//! parent context; columns are the rules of every kind laid out side by
//! side. The logit of rule `j` of `kind` under context `c` is
//! `W[0, off(kind) + j] + W[1 + c, off(kind) + j]`, normalised by a softmax
//! over the kind's own columns.

mod checkpoint;
mod lora;

pub use checkpoint::{checkpoint_hash, CHECKPOINT_HEADER};
pub use lora::{LoraAdapter, DEFAULT_ALPHA, DEFAULT_RANK};

use crate::kwtok::{KwTokError, TokenSeq, Vocabulary};
use crate::minilang::{
    infer_types, parse_surfaces, render_surfaces, Kind, Lang, Program, RuleChooser, CONTEXT_COUNT, KINDS,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::{Arc, LazyLock};
use thiserror::Error;

/// Rows of the logit matrix: the bias row plus one per context.
pub const ROWS: usize = 1 + CONTEXT_COUNT;

static OFFSETS: LazyLock<Vec<usize>> = LazyLock::new(|| {
    let mut acc = 0;
    KINDS
        .iter()
        .map(|k| {
            let o = acc;
            acc += k.rule_count();
            o
        })
        .collect()
});

/// Total number of rules over all kinds, the column count.
pub fn rule_total() -> usize {
    KINDS.iter().map(|k| k.rule_count()).sum()
}

pub fn rule_offset(kind: Kind) -> usize {
    OFFSETS[kind.index()]
}

/// Hash of the kind/rule layout; checkpoints refuse to load across layouts.
pub fn rule_table_hash() -> String {
    let mut h = Sha256::new();
    for k in KINDS {
        h.update(format!("{k:?}:{};", k.rules().join(",")));
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("source does not parse: {0}")]
    Unparseable(String),
    #[error("decision {index} does not fit the rule table")]
    TraceMismatch { index: usize },
    #[error("LoRA rank {rank} outside 1..={max}")]
    Rank { rank: usize, max: usize },
    #[error("policy is already wrapped")]
    AlreadyWrapped,
    #[error("base weights are frozen while adapters are attached")]
    FrozenBase,
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { got: usize, expected: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tokenizer(#[from] KwTokError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// MiniJ to MiniP.
    Forward,
    /// MiniP to MiniJ.
    Backward,
}

impl Direction {
    pub fn source(self) -> Lang {
        match self {
            Direction::Forward => Lang::MiniJ,
            Direction::Backward => Lang::MiniP,
        }
    }

    pub fn target(self) -> Lang {
        self.source().other()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decode {
    /// Highest-probability rule, lowest index on ties.
    Greedy,
    /// Draw from the policy distribution with a seeded generator.
    Sample { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub kind: Kind,
    pub context: usize,
    pub choice: usize,
    pub log_prob: f64,
    /// Log-probabilities of every rule of `kind` at this decision.
    pub log_probs: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionTrace {
    pub decisions: Vec<Decision>,
}

impl DecisionTrace {
    pub fn log_prob(&self) -> f64 {
        self.decisions.iter().map(|d| d.log_prob).sum()
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn sites(&self) -> Vec<Site> {
        self.decisions.iter().map(|d| Site { kind: d.kind, context: d.context, choice: d.choice }).collect()
    }

    pub fn distributions(&self) -> Vec<Vec<f64>> {
        self.decisions.iter().map(|d| d.log_probs.clone()).collect()
    }
}

/// A decision site together with the rule taken there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Site {
    pub kind: Kind,
    pub context: usize,
    pub choice: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    /// Target lexemes; empty when rendering failed.
    pub surfaces: Vec<String>,
    pub trace: DecisionTrace,
    pub error: Option<String>,
}

/// Numerically stable log-softmax of one kind's segment.
fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Per-rule log-probabilities of `kind` under `context` for weights `w`.
pub fn log_probs_at(w: &Array2<f64>, kind: Kind, context: usize) -> Vec<f64> {
    let off = rule_offset(kind);
    let logits: Vec<f64> = (0..kind.rule_count()).map(|j| w[[0, off + j]] + w[[1 + context, off + j]]).collect();
    log_softmax(&logits)
}

struct PolicyChooser<'w> {
    weights: &'w Array2<f64>,
    rng: Option<ChaCha8Rng>,
    trace: Vec<Decision>,
}

impl RuleChooser for PolicyChooser<'_> {
    fn choose(&mut self, kind: Kind, context: usize) -> usize {
        let lp = log_probs_at(self.weights, kind, context);
        let choice = match self.rng.as_mut() {
            None => {
                let mut best = 0;
                for (j, v) in lp.iter().enumerate() {
                    if *v > lp[best] {
                        best = j;
                    }
                }
                best
            }
            Some(rng) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = lp.len() - 1;
                for (j, v) in lp.iter().enumerate() {
                    acc += v.exp();
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                pick
            }
        };
        self.trace.push(Decision { kind, context, choice, log_prob: lp[choice], log_probs: lp });
        choice
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrammarPolicy {
    direction: Direction,
    base: Array2<f64>,
    lora: Option<LoraAdapter>,
}

impl GrammarPolicy {
    /// All logits zero: every kind's rules are equally likely.
    pub fn uniform(direction: Direction) -> Self {
        Self { direction, base: Array2::zeros((ROWS, rule_total())), lora: None }
    }

    /// Prefers the faithful rule of every kind by `margin` nats.
    pub fn faithful(direction: Direction, margin: f64) -> Self {
        let mut p = Self::uniform(direction);
        for k in KINDS {
            p.base[[0, rule_offset(k)]] = margin;
        }
        p
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn base(&self) -> &Array2<f64> {
        &self.base
    }

    pub fn lora(&self) -> Option<&LoraAdapter> {
        self.lora.as_ref()
    }

    pub fn is_wrapped(&self) -> bool {
        self.lora.is_some()
    }

    /// Writes one base weight; refused while adapters are attached.
    pub fn set_base(&mut self, row: usize, col: usize, value: f64) -> Result<(), PolicyError> {
        if self.is_wrapped() {
            return Err(PolicyError::FrozenBase);
        }
        self.base[[row, col]] = value;
        Ok(())
    }

    /// The weights used for decoding: `L + (α/r)·A·B` when wrapped.
    pub fn effective(&self) -> Array2<f64> {
        match &self.lora {
            None => self.base.clone(),
            Some(l) => &self.base + &l.delta(),
        }
    }

    pub fn log_probs(&self, kind: Kind, context: usize) -> Vec<f64> {
        log_probs_at(&self.effective(), kind, context)
    }

    /// Wraps the logit matrix with a rank-`rank` adapter: A standard normal,
    /// B zero.
    pub fn apply_lora(&self, rank: usize, alpha: f64, seed: u64) -> Result<GrammarPolicy, PolicyError> {
        if self.is_wrapped() {
            return Err(PolicyError::AlreadyWrapped);
        }
        let adapter = LoraAdapter::new(ROWS, rule_total(), rank, alpha, seed)?;
        Ok(GrammarPolicy { direction: self.direction, base: self.base.clone(), lora: Some(adapter) })
    }

    /// Folds the adapter into the base weights.
    pub fn merge_lora(&self) -> GrammarPolicy {
        GrammarPolicy { direction: self.direction, base: self.effective(), lora: None }
    }

    /// Replaces the adapter's B matrix.
    pub fn set_lora_b(&mut self, b: Array2<f64>) -> Result<(), PolicyError> {
        let l = self.lora.as_mut().ok_or(PolicyError::Checkpoint("policy has no adapter".into()))?;
        if b.dim() != l.b.dim() {
            return Err(PolicyError::ParamLength { got: b.len(), expected: l.b.len() });
        }
        l.b = b;
        Ok(())
    }

    /// Trainable parameters: the base matrix, or A then B when wrapped,
    /// each row-major.
    pub fn params(&self) -> Vec<f64> {
        match &self.lora {
            None => self.base.iter().copied().collect(),
            Some(l) => l.a.iter().chain(l.b.iter()).copied().collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        match &self.lora {
            None => self.base.len(),
            Some(l) => l.a.len() + l.b.len(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), PolicyError> {
        let expected = self.num_params();
        if params.len() != expected {
            return Err(PolicyError::ParamLength { got: params.len(), expected });
        }
        match &mut self.lora {
            None => self.base.iter_mut().zip(params).for_each(|(w, p)| *w = *p),
            Some(l) => {
                let split = l.a.len();
                l.a.iter_mut().zip(&params[..split]).for_each(|(w, p)| *w = *p);
                l.b.iter_mut().zip(&params[split..]).for_each(|(w, p)| *w = *p);
            }
        }
        Ok(())
    }

    /// Renders `program` (already in the source language) into the target
    /// language. Backward translation first infers MiniJ types; a program
    /// that cannot be typed or rendered yields empty output.
    pub fn translate_program(&self, program: &Program, mode: Decode) -> Translation {
        let typed;
        let program = match self.direction {
            Direction::Forward => program,
            Direction::Backward => match infer_types(program) {
                Ok(p) => {
                    typed = p;
                    &typed
                }
                Err(e) => {
                    return Translation {
                        surfaces: Vec::new(),
                        trace: DecisionTrace::default(),
                        error: Some(e.to_string()),
                    }
                }
            },
        };
        let weights = self.effective();
        let rng = match mode {
            Decode::Greedy => None,
            Decode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        let mut chooser = PolicyChooser { weights: &weights, rng, trace: Vec::new() };
        let rendered = render_surfaces(program, self.direction.target(), &mut chooser);
        let trace = DecisionTrace { decisions: chooser.trace };
        match rendered {
            Ok(surfaces) => Translation { surfaces, trace, error: None },
            Err(e) => Translation { surfaces: Vec::new(), trace, error: Some(e.to_string()) },
        }
    }

    /// Parses `source`, translates it and encodes the output.
    pub fn translate(
        &self,
        source: &TokenSeq,
        vocab: &Vocabulary,
        mode: Decode,
    ) -> Result<(TokenSeq, DecisionTrace), PolicyError> {
        let program = parse_surfaces(&source.surfaces, self.direction.source())
            .map_err(|e| PolicyError::Unparseable(e.to_string()))?;
        let t = self.translate_program(&program, mode);
        let seq = vocab.encode_lexemes(&t.surfaces, self.direction.target())?;
        Ok((seq, t.trace))
    }

    fn check_sites(sites: &[Site]) -> Result<(), PolicyError> {
        for (index, s) in sites.iter().enumerate() {
            if s.choice >= s.kind.rule_count() || s.context >= CONTEXT_COUNT {
                return Err(PolicyError::TraceMismatch { index });
            }
        }
        Ok(())
    }

    /// Current log-probability of each site's choice.
    pub fn site_log_probs(&self, sites: &[Site]) -> Result<Vec<f64>, PolicyError> {
        Self::check_sites(sites)?;
        let w = self.effective();
        Ok(sites.iter().map(|s| log_probs_at(&w, s.kind, s.context)[s.choice]).collect())
    }

    /// Log-probability of a trace under the current parameters and its
    /// gradient with respect to the trainable parameters.
    pub fn sequence_log_prob_and_grad(&self, trace: &DecisionTrace) -> Result<(f64, Vec<f64>), PolicyError> {
        let sites = trace.sites();
        let lp = self.site_log_probs(&sites)?.iter().sum();
        let grad = self.weighted_grad(&sites, &vec![1.0; sites.len()])?;
        Ok((lp, grad))
    }

    /// Gradient of `Σ weights[i] · log p(sites[i])` with respect to the
    /// trainable parameters.
    pub fn weighted_grad(&self, sites: &[Site], weights: &[f64]) -> Result<Vec<f64>, PolicyError> {
        Self::check_sites(sites)?;
        if sites.len() != weights.len() {
            return Err(PolicyError::ParamLength { got: weights.len(), expected: sites.len() });
        }
        let w = self.effective();
        let mut g = Array2::<f64>::zeros(w.dim());
        for (s, &wt) in sites.iter().zip(weights) {
            if wt == 0.0 {
                continue;
            }
            let off = rule_offset(s.kind);
            for (j, lp) in log_probs_at(&w, s.kind, s.context).iter().enumerate() {
                let d = wt * (f64::from(u8::from(j == s.choice)) - lp.exp());
                g[[0, off + j]] += d;
                g[[1 + s.context, off + j]] += d;
            }
        }
        Ok(match &self.lora {
            None => g.iter().copied().collect(),
            Some(l) => {
                let (ga, gb) = l.chain(&g);
                ga.iter().chain(gb.iter()).copied().collect()
            }
        })
    }

    /// Frozen copy of the current distributions.
    pub fn snapshot_reference(&self) -> ReferencePolicy {
        ReferencePolicy { direction: self.direction, weights: Arc::new(self.effective()) }
    }

    /// Pushes the preference of a random subset of kinds onto a wrong rule
    /// and adds Gaussian noise to every base weight.
    pub fn corrupted(&self, cfg: &CorruptConfig, seed: u64) -> Result<GrammarPolicy, PolicyError> {
        if self.is_wrapped() {
            return Err(PolicyError::FrozenBase);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for k in KINDS {
            let n = k.rule_count();
            if n > 1 && rng.random_bool(cfg.kind_fraction) {
                let wrong = rng.random_range(1..n);
                out.base[[0, rule_offset(k) + wrong]] += cfg.margin;
            }
        }
        if cfg.noise > 0.0 {
            let normal = Normal::new(0.0, cfg.noise).expect("positive deviation");
            out.base.iter_mut().for_each(|w| *w += normal.sample(&mut rng));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptConfig {
    /// Probability that a kind with alternatives gets a wrong preference.
    pub kind_fraction: f64,
    /// Logit added to the wrong rule.
    pub margin: f64,
    /// Standard deviation of noise on every base logit.
    pub noise: f64,
}

impl Default for CorruptConfig {
    fn default() -> Self {
        Self { kind_fraction: 0.5, margin: 3.0, noise: 0.1 }
    }
}

/// Distributions of a policy frozen at snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy {
    direction: Direction,
    weights: Arc<Array2<f64>>,
}

impl ReferencePolicy {
    /// Rebuilds a reference from saved weights.
    pub fn from_weights(direction: Direction, weights: Array2<f64>) -> Result<Self, PolicyError> {
        if weights.dim() != (ROWS, rule_total()) {
            return Err(PolicyError::ParamLength { got: weights.len(), expected: ROWS * rule_total() });
        }
        Ok(Self { direction, weights: Arc::new(weights) })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn log_probs(&self, kind: Kind, context: usize) -> Vec<f64> {
        log_probs_at(&self.weights, kind, context)
    }

    /// Reference distributions at each decision of a trace.
    pub fn distributions(&self, trace: &DecisionTrace) -> Vec<Vec<f64>> {
        trace.decisions.iter().map(|d| self.log_probs(d.kind, d.context)).collect()
    }
}
