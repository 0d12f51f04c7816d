//! Analytic gradients against central finite differences.

use super::{directional_fd, dot, relative_error};
use feedtrans_core::minilang::{gen_program, GenConfig};
use feedtrans_core::policy::{Decision, Decode, Direction, GrammarPolicy, Site};
use feedtrans_core::training::{ce_loss, ce_loss_and_grad, gold_sites, ppo_gradient, PpoItem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A policy with random base logits, optionally wrapped with random A and B.
pub fn random_policy(direction: Direction, seed: u64, wrapped: bool) -> GrammarPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = GrammarPolicy::uniform(direction);
    let n = p.num_params();
    p.set_params(&(0..n).map(|_| normal(&mut rng)).collect::<Vec<_>>()).unwrap();
    if wrapped {
        p = p.apply_lora(4, 8.0, seed ^ 0x5a5a).unwrap();
        let n = p.num_params();
        p.set_params(&(0..n).map(|_| 0.3 * normal(&mut rng)).collect::<Vec<_>>()).unwrap();
    }
    p
}

/// The policy's current distributions at fixed sites.
pub fn decisions_at(policy: &GrammarPolicy, sites: &[Site]) -> Vec<Decision> {
    sites
        .iter()
        .map(|s| {
            let log_probs = policy.log_probs(s.kind, s.context);
            Decision { kind: s.kind, context: s.context, choice: s.choice, log_prob: log_probs[s.choice], log_probs }
        })
        .collect()
}

pub fn with_params(policy: &GrammarPolicy, x: &[f64]) -> GrammarPolicy {
    let mut p = policy.clone();
    p.set_params(x).unwrap();
    p
}

/// Worst relative error of `grad` against finite differences of `f` along
/// three random directions.
pub fn worst_directional_error(
    policy: &GrammarPolicy,
    grad: &[f64],
    f: &dyn Fn(&GrammarPolicy) -> f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = policy.params();
    (0..3)
        .map(|_| {
            let d: Vec<f64> = (0..x.len()).map(|_| normal(&mut rng)).collect();
            let numeric = directional_fd(&mut |y| f(&with_params(policy, y)), &x, &d, 1e-5);
            relative_error(&[dot(grad, &d)], &[numeric])
        })
        .fold(0.0, f64::max)
}

/// Log-probability of a sampled trace.
pub fn sequence_error(seed: u64, wrapped: bool) -> f64 {
    let program = gen_program(seed, &GenConfig::default());
    let policy = random_policy(Direction::Forward, seed, wrapped);
    let trace = policy.translate_program(&program, Decode::Sample { seed }).trace;
    let sites = trace.sites();
    let (_, grad) = policy.sequence_log_prob_and_grad(&trace).unwrap();
    let f = |p: &GrammarPolicy| p.site_log_probs(&sites).unwrap().iter().sum::<f64>();
    worst_directional_error(&policy, &grad, &f, seed)
}

/// Cross-entropy against the faithful decisions, in either direction.
pub fn ce_error(seed: u64, wrapped: bool, direction: Direction) -> f64 {
    let program = gen_program(seed, &GenConfig::default());
    let gold = gold_sites(&program, Direction::Forward).unwrap();
    let gold = match direction {
        Direction::Forward => gold,
        Direction::Backward => {
            let t = feedtrans_core::minilang::render_program(&program, direction.source()).unwrap();
            let t = feedtrans_core::minilang::parse_text(&t, direction.source()).unwrap();
            gold_sites(&t, Direction::Backward).unwrap()
        }
    };
    let policy = random_policy(direction, seed, wrapped);
    let (_, grad) = ce_loss_and_grad(&policy, &gold, &decisions_at(&policy, &gold)).unwrap();
    let f = |p: &GrammarPolicy| ce_loss(&gold, &decisions_at(p, &gold)).unwrap();
    worst_directional_error(&policy, &grad, &f, seed)
}

/// Clipped surrogate after the policy has moved away from the rollout
/// policy, so some ratios leave the clip band.
pub fn surrogate_error(seed: u64, advantage: f64) -> f64 {
    let program = gen_program(seed, &GenConfig::default());
    let old = random_policy(Direction::Forward, seed, false);
    let trace = old.translate_program(&program, Decode::Sample { seed }).trace;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let x: Vec<f64> = old.params().iter().map(|w| w + 0.2 * normal(&mut rng)).collect();
    let policy = with_params(&old, &x);
    let items = vec![PpoItem::from_trace(&trace, advantage)];
    let (_, grad) = ppo_gradient(&policy, &items, 0.2).unwrap();
    let f = |p: &GrammarPolicy| ppo_gradient(p, &items, 0.2).unwrap().0;
    worst_directional_error(&policy, &grad, &f, seed)
}
