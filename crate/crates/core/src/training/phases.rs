use super::loss::{ablation_losses, ce_loss_and_grad, LossMode};
use super::{Adam, LogRecord, TrainConfig, TrainEnv, TrainError, TrainState};
use crate::corpus::TrainExample;
use crate::feedback::{b2b_rewards, kl_divergence, omega_cf, omega_sf_run, B2bExample, FeedbackError, RewardBreakdown};
use crate::kwtok::TokenSeq;
use crate::minilang::{infer_types, parse_surfaces, render_surfaces, Kind, Lang, Program, RuleChooser};
use crate::policy::{
    log_probs_at, DecisionTrace, Decode, Direction, GrammarPolicy, PolicyError, ReferencePolicy, Site,
};
use crate::symexec::run_suite;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const TAG_SFT: u64 = 0x5F7;
const TAG_RL: u64 = 0x41;

#[derive(Default)]
struct Recorder {
    sites: Vec<Site>,
}

impl RuleChooser for Recorder {
    fn choose(&mut self, kind: Kind, context: usize) -> usize {
        self.sites.push(Site { kind, context, choice: 0 });
        0
    }
}

/// Decision sites of the faithful translation of `program`, each labelled
/// with the faithful rule.
pub fn gold_sites(program: &Program, direction: Direction) -> Result<Vec<Site>, String> {
    let typed;
    let program = match direction {
        Direction::Forward => program,
        Direction::Backward => {
            typed = infer_types(program).map_err(|e| e.to_string())?;
            &typed
        }
    };
    let mut rec = Recorder::default();
    render_surfaces(program, direction.target(), &mut rec).map_err(|e| e.to_string())?;
    Ok(rec.sites)
}

struct Gold {
    fwd: Vec<Site>,
    bwd: Vec<Site>,
}

fn gold_for(ex: &TrainExample) -> Result<Gold, TrainError> {
    let err = |message: String| TrainError::Example { id: ex.id.clone(), message };
    let s = parse_surfaces(&ex.s.surfaces, Lang::MiniJ).map_err(|e| err(e.to_string()))?;
    let t = parse_surfaces(&ex.t.surfaces, Lang::MiniP).map_err(|e| err(e.to_string()))?;
    Ok(Gold {
        fwd: gold_sites(&s, Direction::Forward).map_err(err)?,
        bwd: gold_sites(&t, Direction::Backward).map_err(err)?,
    })
}

fn empty_seq(lang: Lang) -> TokenSeq {
    TokenSeq { ids: Vec::new(), surfaces: Vec::new(), lang }
}

/// Back-translation of `t_hat`; an unparseable or untypable `t_hat` yields
/// an empty program and an empty trace.
fn back_translate(
    backward: &GrammarPolicy,
    t_hat: &TokenSeq,
    env: &TrainEnv,
    mode: Decode,
) -> Result<(TokenSeq, DecisionTrace), TrainError> {
    match backward.translate(t_hat, env.vocab, mode) {
        Ok(out) => Ok(out),
        Err(PolicyError::Unparseable(_)) => Ok((empty_seq(Lang::MiniJ), DecisionTrace::default())),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Default)]
pub struct EpochStats {
    pub records: Vec<LogRecord>,
    pub examples: usize,
    /// Examples whose backward step was skipped (SFT) or whose rollout
    /// could not be rendered (RL).
    pub skipped: usize,
    pub backend_errors: usize,
    /// Mean forward CE (SFT) or mean forward reward (RL).
    pub mean_fwd: f64,
    pub mean_bwd: f64,
}

fn apply(policy: &mut GrammarPolicy, opt: &mut Adam, grad: &[f64], lr: f64) -> Result<(), TrainError> {
    let mut p = policy.params();
    opt.step(&mut p, grad, lr);
    policy.set_params(&p)?;
    Ok(())
}

fn accumulate(target: &mut [f64], grad: &[f64], coef: f64) {
    target.iter_mut().zip(grad).for_each(|(t, g)| *t += coef * g);
}

fn epoch_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

struct SftItem {
    ce_fwd: f64,
    grad_fwd: Vec<f64>,
    bwd: Option<(f64, Vec<f64>)>,
    cf_fwd: f64,
    cf_bwd: f64,
    sf: f64,
    skipped: Option<String>,
}

fn sft_item(
    state: &TrainState,
    ex: &TrainExample,
    gold: &Gold,
    cfg: &TrainConfig,
    env: &TrainEnv,
) -> Result<SftItem, TrainError> {
    let (t_hat, trace_f) = state.forward.translate(&ex.s, env.vocab, Decode::Greedy)?;
    let (ce_fwd, grad_fwd) = ce_loss_and_grad(&state.forward, &gold.fwd, &trace_f.decisions)?;
    let mut item = SftItem { ce_fwd, grad_fwd, bwd: None, cf_fwd: 0.0, cf_bwd: 0.0, sf: 0.0, skipped: None };
    let mut s_hat = empty_seq(Lang::MiniJ);
    if !cfg.cf_only {
        let (sh, trace_b) = back_translate(&state.backward, &t_hat, env, Decode::Greedy)?;
        if trace_b.is_empty() {
            item.skipped = Some("forward output cannot be back-translated".into());
        } else {
            item.bwd = Some(ce_loss_and_grad(&state.backward, &gold.bwd, &trace_b.decisions)?);
        }
        s_hat = sh;
    }
    if cfg.loss != LossMode::Ce {
        let feedback = || -> Result<(f64, f64, f64), FeedbackError> {
            let cf_fwd = omega_cf(&ex.t, &t_hat, env.backends.target)?;
            if cfg.cf_only {
                return Ok((cf_fwd, 0.0, 0.0));
            }
            let cf_bwd = omega_cf(&ex.s, &s_hat, env.backends.source)?;
            let program = parse_surfaces(&s_hat.surfaces, Lang::MiniJ).ok();
            let sf =
                omega_sf_run(&run_suite(&ex.suite, program.as_ref(), cfg.feedback.test_fuel), cfg.feedback.epsilon);
            Ok((cf_fwd, cf_bwd, sf.value))
        };
        let (cf_fwd, cf_bwd, sf) = feedback()?;
        (item.cf_fwd, item.cf_bwd, item.sf) = (cf_fwd, cf_bwd, sf);
    }
    Ok(item)
}

/// One supervised pass. The forward policy is fitted to the faithful
/// decisions over `s`; the backward policy, run on the forward policy's
/// greedy output, is fitted to the faithful decisions over `t`.
pub fn sft_epoch(
    state: &mut TrainState,
    corpus: &[TrainExample],
    cfg: &TrainConfig,
    env: &TrainEnv,
) -> Result<EpochStats, TrainError> {
    let golds: Vec<Gold> = corpus.iter().map(gold_for).collect::<Result<_, _>>()?;
    let order = epoch_order(corpus.len(), state.seed_for(cfg, &[TAG_SFT, state.sft_epochs as u64]));
    let mut stats = EpochStats { examples: corpus.len(), ..Default::default() };
    let epoch = state.sft_epochs;
    let mut n_bwd = 0usize;
    for batch in order.chunks(cfg.batch_size.max(1)) {
        let frozen = &*state;
        let items: Vec<SftItem> =
            batch.par_iter().map(|&i| sft_item(frozen, &corpus[i], &golds[i], cfg, env)).collect::<Result<_, _>>()?;

        let ce: Vec<f64> = items.iter().map(|it| it.ce_fwd).collect();
        let cf: Vec<f64> = items.iter().map(|it| it.cf_fwd).collect();
        let sf: Vec<f64> = items.iter().map(|it| it.sf).collect();
        let coef = ablation_losses(cfg.loss, &ce, &cf, (!cfg.cf_only).then_some(&sf[..]))?.ce_coefficients;
        let mut grad = vec![0.0; state.forward.num_params()];
        for (it, k) in items.iter().zip(&coef) {
            accumulate(&mut grad, &it.grad_fwd, *k);
        }

        let with_bwd: Vec<&SftItem> = items.iter().filter(|it| it.bwd.is_some()).collect();
        let mut grad_b = None;
        if !with_bwd.is_empty() {
            let ce: Vec<f64> = with_bwd.iter().map(|it| it.bwd.as_ref().expect("filtered").0).collect();
            let cf: Vec<f64> = with_bwd.iter().map(|it| it.cf_bwd).collect();
            let sf: Vec<f64> = with_bwd.iter().map(|it| it.sf).collect();
            let coef = ablation_losses(cfg.loss, &ce, &cf, Some(&sf))?.ce_coefficients;
            let mut g = vec![0.0; state.backward.num_params()];
            for (it, k) in with_bwd.iter().zip(&coef) {
                accumulate(&mut g, &it.bwd.as_ref().expect("filtered").1, *k);
            }
            grad_b = Some(g);
        }

        apply(&mut state.forward, &mut state.optimizers.sft_fwd, &grad, cfg.lr_sft)?;
        if let Some(g) = grad_b {
            apply(&mut state.backward, &mut state.optimizers.sft_bwd, &g, cfg.lr_sft)?;
        }
        for (&i, it) in batch.iter().zip(&items) {
            stats.mean_fwd += it.ce_fwd;
            if let Some((c, _)) = &it.bwd {
                stats.mean_bwd += c;
                n_bwd += 1;
            }
            stats.skipped += usize::from(it.skipped.is_some());
            stats.records.push(LogRecord::Sft {
                round: state.rounds,
                epoch,
                id: corpus[i].id.clone(),
                ce_fwd: it.ce_fwd,
                ce_bwd: it.bwd.as_ref().map(|b| b.0),
                skipped: it.skipped.clone(),
            });
        }
    }
    stats.mean_fwd /= corpus.len().max(1) as f64;
    stats.mean_bwd /= n_bwd.max(1) as f64;
    state.sft_epochs += 1;
    Ok(stats)
}

/// Monte-Carlo KL estimate of a sampled trace: the mean over decisions of
/// `ln p(choice) - ln q(choice)`.
pub fn sample_kl(trace: &DecisionTrace, reference: &ReferencePolicy) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let total: f64 =
        trace.decisions.iter().map(|d| d.log_prob - reference.log_probs(d.kind, d.context)[d.choice]).sum();
    total / trace.len() as f64
}

/// One rollout's decisions, their log-probabilities at sampling time and
/// the advantage broadcast to all of them.
#[derive(Debug, Clone)]
pub struct PpoItem {
    pub sites: Vec<Site>,
    pub old_log_probs: Vec<f64>,
    pub advantage: f64,
}

impl PpoItem {
    pub fn from_trace(trace: &DecisionTrace, advantage: f64) -> Self {
        PpoItem { sites: trace.sites(), old_log_probs: trace.decisions.iter().map(|d| d.log_prob).collect(), advantage }
    }
}

/// Clipped surrogate `mean_items mean_i min(ρ_i A, clip(ρ_i, 1-c, 1+c) A)`
/// with `ρ_i = p(a_i) / p_old(a_i)`, and its gradient. Items without
/// decisions are ignored.
pub fn ppo_gradient(policy: &GrammarPolicy, items: &[PpoItem], clip: f64) -> Result<(f64, Vec<f64>), TrainError> {
    let active: Vec<&PpoItem> = items.iter().filter(|it| !it.sites.is_empty()).collect();
    if active.is_empty() {
        return Ok((0.0, vec![0.0; policy.num_params()]));
    }
    let m = active.len() as f64;
    let mut objective = 0.0;
    let mut sites = Vec::new();
    let mut weights = Vec::new();
    for it in active {
        let lp = policy.site_log_probs(&it.sites)?;
        let n = it.sites.len() as f64;
        for (j, site) in it.sites.iter().enumerate() {
            let ratio = (lp[j] - it.old_log_probs[j]).exp();
            let unclipped = ratio * it.advantage;
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * it.advantage;
            objective += unclipped.min(clipped) / (n * m);
            if unclipped <= clipped {
                sites.push(*site);
                weights.push(unclipped / (n * m));
            }
        }
    }
    Ok((objective, policy.weighted_grad(&sites, &weights)?))
}

fn ppo_update(
    policy: &mut GrammarPolicy,
    opt: &mut Adam,
    items: &[PpoItem],
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if items.iter().all(|it| it.sites.is_empty()) {
        return Ok(());
    }
    for _ in 0..cfg.ppo_epochs {
        let (_, grad) = ppo_gradient(policy, items, cfg.clip)?;
        let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
        apply(policy, opt, &descent, cfg.lr_rl)?;
    }
    Ok(())
}

struct Rollout {
    fwd: DecisionTrace,
    bwd: DecisionTrace,
    reward: RewardBreakdown,
    backend_error: bool,
}

fn zero_reward() -> RewardBreakdown {
    RewardBreakdown {
        omega_cf_fwd: 0.0,
        omega_cf_bwd: 0.0,
        omega_sf: 0.0,
        kl_fwd: 0.0,
        kl_bwd: 0.0,
        r_fwd: 0.0,
        r_bwd: 0.0,
        no_tests: false,
    }
}

fn rollout(
    state: &TrainState,
    ex: &TrainExample,
    seeds: (u64, u64),
    cfg: &TrainConfig,
    env: &TrainEnv,
) -> Result<Rollout, TrainError> {
    let (t_hat, fwd) = state.forward.translate(&ex.s, env.vocab, Decode::Sample { seed: seeds.0 })?;
    let kl_fwd = sample_kl(&fwd, &state.ref_forward);
    let beta = cfg.feedback.beta;
    if cfg.cf_only {
        return Ok(match omega_cf(&ex.t, &t_hat, env.backends.target) {
            Ok(cf) => Rollout {
                fwd,
                bwd: DecisionTrace::default(),
                reward: RewardBreakdown { omega_cf_fwd: cf, kl_fwd, r_fwd: cf - beta * kl_fwd, ..zero_reward() },
                backend_error: false,
            },
            Err(FeedbackError::Backend(_)) => {
                Rollout { fwd, bwd: DecisionTrace::default(), reward: zero_reward(), backend_error: true }
            }
            Err(e) => return Err(e.into()),
        });
    }
    let (s_hat, bwd) = back_translate(&state.backward, &t_hat, env, Decode::Sample { seed: seeds.1 })?;
    let kl_bwd = sample_kl(&bwd, &state.ref_backward);
    let example = B2bExample { s: &ex.s, t: &ex.t, t_hat: &t_hat, s_hat: &s_hat, suite: &ex.suite };
    Ok(match b2b_rewards(&example, &env.backends, kl_fwd, kl_bwd, &cfg.feedback) {
        Ok(reward) => Rollout { fwd, bwd, reward, backend_error: false },
        Err(FeedbackError::Backend(_)) => Rollout { fwd, bwd, reward: zero_reward(), backend_error: true },
        Err(e) => return Err(e.into()),
    })
}

/// One reinforcement pass: sampled back-to-back rollouts against a frozen
/// snapshot per batch, then clipped-surrogate updates of both policies.
pub fn rl_epoch(
    state: &mut TrainState,
    corpus: &[TrainExample],
    cfg: &TrainConfig,
    env: &TrainEnv,
) -> Result<EpochStats, TrainError> {
    let epoch = state.rl_epochs;
    let order = epoch_order(corpus.len(), state.seed_for(cfg, &[TAG_RL, epoch as u64]));
    let mut stats = EpochStats { examples: corpus.len(), ..Default::default() };
    for batch in order.chunks(cfg.batch_size.max(1)) {
        let frozen = &*state;
        let rollouts: Vec<Rollout> = batch
            .par_iter()
            .map(|&i| {
                let seeds = (
                    frozen.seed_for(cfg, &[TAG_RL, epoch as u64, i as u64, 0]),
                    frozen.seed_for(cfg, &[TAG_RL, epoch as u64, i as u64, 1]),
                );
                rollout(frozen, &corpus[i], seeds, cfg, env)
            })
            .collect::<Result<_, _>>()?;
        let mut items_f = Vec::with_capacity(rollouts.len());
        let mut items_b = Vec::with_capacity(rollouts.len());
        for (&i, r) in batch.iter().zip(&rollouts) {
            let a_f = state.baseline_fwd.advantage(r.reward.r_fwd);
            state.baseline_fwd.observe(r.reward.r_fwd, cfg.baseline_decay, cfg.baseline_warmup);
            items_f.push(PpoItem::from_trace(&r.fwd, a_f));
            if !cfg.cf_only {
                let a_b = state.baseline_bwd.advantage(r.reward.r_bwd);
                state.baseline_bwd.observe(r.reward.r_bwd, cfg.baseline_decay, cfg.baseline_warmup);
                items_b.push(PpoItem::from_trace(&r.bwd, a_b));
            }
            stats.mean_fwd += r.reward.r_fwd;
            stats.mean_bwd += r.reward.r_bwd;
            stats.backend_errors += usize::from(r.backend_error);
            stats.skipped += usize::from(!cfg.cf_only && r.bwd.is_empty());
            stats.records.push(LogRecord::Rl {
                round: state.rounds,
                epoch,
                id: corpus[i].id.clone(),
                reward: r.reward,
                backend_error: r.backend_error,
            });
        }
        ppo_update(&mut state.forward, &mut state.optimizers.rl_fwd, &items_f, cfg)?;
        if !cfg.cf_only {
            ppo_update(&mut state.backward, &mut state.optimizers.rl_bwd, &items_b, cfg)?;
        }
    }
    stats.mean_fwd /= corpus.len().max(1) as f64;
    stats.mean_bwd /= corpus.len().max(1) as f64;
    state.rl_epochs += 1;
    Ok(stats)
}

/// Mean test-pass feedback of greedy back-to-back translation. An empty
/// corpus scores 0.
pub fn eval_pair(
    forward: &GrammarPolicy,
    backward: &GrammarPolicy,
    val: &[TrainExample],
    cfg: &TrainConfig,
    env: &TrainEnv,
) -> f64 {
    if val.is_empty() {
        return 0.0;
    }
    let scores: Vec<f64> = val
        .par_iter()
        .map(|ex| {
            let program = forward
                .translate(&ex.s, env.vocab, Decode::Greedy)
                .ok()
                .and_then(|(t_hat, _)| backward.translate(&t_hat, env.vocab, Decode::Greedy).ok())
                .and_then(|(s_hat, _)| parse_surfaces(&s_hat.surfaces, Lang::MiniJ).ok());
            omega_sf_run(&run_suite(&ex.suite, program.as_ref(), cfg.feedback.test_fuel), cfg.feedback.epsilon).value
        })
        .collect();
    scores.iter().sum::<f64>() / val.len() as f64
}

pub fn eval_b2b(state: &TrainState, val: &[TrainExample], cfg: &TrainConfig, env: &TrainEnv) -> f64 {
    eval_pair(&state.forward, &state.backward, val, cfg, env)
}

/// Mean exact KL to the references over the faithful decision sites of
/// each example, forward then backward.
pub fn reference_kl(state: &TrainState, corpus: &[TrainExample]) -> Result<(f64, f64), TrainError> {
    if corpus.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (wf, wb) = (state.forward.effective(), state.backward.effective());
    let kl = |w: &Array2<f64>, reference: &ReferencePolicy, sites: &[Site]| -> Result<f64, TrainError> {
        let p: Vec<Vec<f64>> = sites.iter().map(|s| log_probs_at(w, s.kind, s.context)).collect();
        let q: Vec<Vec<f64>> = sites.iter().map(|s| reference.log_probs(s.kind, s.context)).collect();
        Ok(kl_divergence(&p, &q)?)
    };
    let (mut f, mut b) = (0.0, 0.0);
    for ex in corpus {
        let g = gold_for(ex)?;
        f += kl(&wf, &state.ref_forward, &g.fwd)?;
        b += kl(&wb, &state.ref_backward, &g.bwd)?;
    }
    Ok((f / corpus.len() as f64, b / corpus.len() as f64))
}
