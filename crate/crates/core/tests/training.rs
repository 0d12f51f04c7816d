//! Behaviour of the supervised and reinforcement phases and of the
//! interleaving loop.

mod common;

use common::{builtin_backends, corpus_fixture, corrupted_pair, env};
use feedtrans_core::feedback::omega_sf;
use feedtrans_core::minilang::{parse_surfaces, Lang};
use feedtrans_core::policy::{Decode, Direction, GrammarPolicy};
use feedtrans_core::training::{
    eval_b2b, eval_pair, interleaved_train_with, ppo_gradient, rl_epoch, sft_epoch, write_log_jsonl, Phase, PpoItem,
    TrainConfig, TrainState, TrainStatus,
};

fn toy_config() -> TrainConfig {
    TrainConfig { lr_sft: 0.01, lr_rl: 0.01, max_rounds: 1, ..TrainConfig::default() }
}

#[test]
fn sft_on_one_pair_lowers_ce_every_epoch() {
    let fx = corpus_fixture(8, 40);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let cfg = toy_config();
    let (f, bw) = corrupted_pair(7);
    let mut state = TrainState::new(f, bw, &cfg).unwrap();
    let one = &fx.examples[..1];
    let mut last = f64::INFINITY;
    for epoch in 0..10 {
        let ce = sft_epoch(&mut state, one, &cfg, &env).unwrap().mean_fwd;
        assert!(ce < last, "epoch {epoch}: {ce} after {last}");
        last = ce;
    }
}

#[test]
fn zero_step_size_leaves_parameters_unchanged() {
    let fx = corpus_fixture(6, 41);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let cfg = TrainConfig { lr_sft: 0.0, lr_rl: 0.0, ..toy_config() };
    let (f, bw) = corrupted_pair(3);
    let mut state = TrainState::new(f, bw, &toy_config()).unwrap();
    let before = (state.forward.params(), state.backward.params());
    sft_epoch(&mut state, &fx.examples, &cfg, &env).unwrap();
    rl_epoch(&mut state, &fx.examples, &cfg, &env).unwrap();
    assert_eq!((state.forward.params(), state.backward.params()), before);
}

#[test]
fn first_surrogate_step_is_vanilla_policy_gradient() {
    let fx = corpus_fixture(5, 42);
    let (f, _) = corrupted_pair(5);
    let mut policy = f.apply_lora(4, 8.0, 1).unwrap();
    // A nonzero B so both adapter factors carry gradient.
    let x: Vec<f64> = policy.params().iter().enumerate().map(|(i, w)| w + 0.01 * ((i % 7) as f64 - 3.0)).collect();
    policy.set_params(&x).unwrap();
    let advantages = [1.5, -0.5, 0.0, 2.0, -1.0];
    let traces: Vec<_> = fx
        .examples
        .iter()
        .enumerate()
        .map(|(i, ex)| policy.translate(&ex.s, &fx.vocab, Decode::Sample { seed: i as u64 }).unwrap().1)
        .collect();
    let items: Vec<PpoItem> = traces.iter().zip(advantages).map(|(t, a)| PpoItem::from_trace(t, a)).collect();
    let (objective, grad) = ppo_gradient(&policy, &items, 0.2).unwrap();
    // At ratio 1 the surrogate is the mean advantage and its gradient is
    // the mean over rollouts of A/n · ∇ log p(trace).
    let m = items.len() as f64;
    let mut want = vec![0.0; grad.len()];
    let mut want_obj = 0.0;
    for (trace, a) in traces.iter().zip(advantages) {
        let (_, g) = policy.sequence_log_prob_and_grad(trace).unwrap();
        let n = trace.len() as f64;
        want.iter_mut().zip(&g).for_each(|(w, gi)| *w += a / (n * m) * gi);
        want_obj += a / m;
    }
    assert!((objective - want_obj).abs() < 1e-12);
    let err = common::relative_error(&grad, &want);
    assert!(err < 1e-10, "relative error {err}");
}

#[test]
fn forward_reinforcement_raises_compiler_reward() {
    let fx = corpus_fixture(24, 43);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let mut cfg = TrainConfig { cf_only: true, lr_rl: 0.02, ..toy_config() };
    cfg.feedback.beta = 0.0;
    let (f, bw) = corrupted_pair(11);
    let mut state = TrainState::unwrapped(f, bw);
    let backward = state.backward.clone();
    let first = rl_epoch(&mut state, &fx.examples, &cfg, &env).unwrap().mean_fwd;
    let mut last = first;
    for _ in 0..14 {
        last = rl_epoch(&mut state, &fx.examples, &cfg, &env).unwrap().mean_fwd;
    }
    assert!(last > first + 0.2, "mean reward {first} -> {last}");
    // Compiler feedback only never touches the backward model.
    assert_eq!(state.backward, backward);
}

/// Runs one round with a fixed evaluation per phase and checks the kept
/// state against independently recomputed phase outputs.
fn gate(val_sft: f64, val_rl: f64) -> (Phase, bool) {
    let fx = corpus_fixture(10, 44);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let cfg = toy_config();
    let (f, bw) = corrupted_pair(9);
    let entry = TrainState::new(f, bw, &cfg).unwrap();

    let mut sft = entry.clone();
    sft_epoch(&mut sft, &fx.examples, &cfg, &env).unwrap();
    let mut rl = entry.clone();
    rl_epoch(&mut rl, &fx.examples, &cfg, &env).unwrap();
    assert_ne!(sft.param_hash(), rl.param_hash());

    let mut eval = |_: &TrainState, p: Phase| Ok(if p == Phase::Rl { val_rl } else { val_sft });
    let out = interleaved_train_with(entry, &fx.examples, &cfg, &env, &mut eval, &mut |_| Ok(())).unwrap();
    let record = &out.state.history()[0];
    assert_eq!((record.val_sft, record.val_rl), (val_sft, val_rl));
    assert_eq!(record.sft_hash, sft.param_hash());
    assert_eq!(record.rl_hash, rl.param_hash());
    let expected = if record.kept == Phase::Rl { &rl } else { &sft };
    let exact = out.state.forward == expected.forward
        && out.state.backward == expected.backward
        && out.state.optimizers == expected.optimizers
        && out.state.param_hash() == expected.param_hash();
    (record.kept, exact)
}

#[test]
fn gating_keeps_rl_when_not_worse() {
    assert_eq!(gate(0.5, 0.6), (Phase::Rl, true));
    assert_eq!(gate(0.5, 0.5), (Phase::Rl, true));
}

#[test]
fn gating_keeps_sft_when_rl_is_worse() {
    assert_eq!(gate(0.5, 0.4), (Phase::Sft, true));
}

#[test]
fn constant_scores_converge_after_two_rounds() {
    let fx = corpus_fixture(6, 45);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let cfg = TrainConfig { max_rounds: 5, ..toy_config() };
    let (f, bw) = corrupted_pair(1);
    let state = TrainState::new(f, bw, &cfg).unwrap();
    let mut eval = |_: &TrainState, _: Phase| Ok(0.25);
    let mut seen = 0;
    let out = interleaved_train_with(state, &fx.examples, &cfg, &env, &mut eval, &mut |_| {
        seen += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(out.status, TrainStatus::Converged);
    assert_eq!((out.state.rounds, seen), (2, 2));
}

#[test]
fn same_seed_same_run() {
    let fx = corpus_fixture(12, 46);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let cfg = TrainConfig { max_rounds: 2, seed: 5, ..toy_config() };
    let (train, val) = fx.examples.split_at(8);
    let run = || {
        let (f, bw) = corrupted_pair(2);
        let state = TrainState::new(f, bw, &cfg).unwrap();
        let mut eval = |s: &TrainState, _: Phase| Ok(eval_b2b(s, val, &cfg, &env));
        let out = interleaved_train_with(state, train, &cfg, &env, &mut eval, &mut |_| Ok(())).unwrap();
        let mut log = Vec::new();
        write_log_jsonl(&out.log, &mut log).unwrap();
        (out.state.param_hash(), log)
    };
    assert_eq!(run(), run());
    let other = TrainConfig { seed: 6, ..cfg.clone() };
    let (f, bw) = corrupted_pair(2);
    let mut a = TrainState::new(f.clone(), bw.clone(), &cfg).unwrap();
    let mut c = TrainState::new(f, bw, &other).unwrap();
    rl_epoch(&mut a, train, &cfg, &env).unwrap();
    rl_epoch(&mut c, train, &other, &env).unwrap();
    assert_ne!(a.param_hash(), c.param_hash());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let fx = corpus_fixture(8, 47);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let cfg = TrainConfig { max_rounds: 1, ..toy_config() };
    let (f, bw) = corrupted_pair(4);
    let state = TrainState::new(f, bw, &cfg).unwrap();
    let mut eval = |s: &TrainState, _: Phase| Ok(eval_b2b(s, &fx.examples, &cfg, &env));
    let out = interleaved_train_with(state, &fx.examples, &cfg, &env, &mut eval, &mut |_| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let saved = out.state.save_round(dir.path()).unwrap();
    assert!(saved.ends_with("round-01"));
    let loaded = TrainState::load_dir(&saved).unwrap();
    assert_eq!(loaded, out.state);
    assert_eq!(loaded.param_hash(), out.state.param_hash());
}

#[test]
fn evaluation_ignores_order() {
    let fx = corpus_fixture(16, 48);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let cfg = toy_config();
    let (f, bw) = corrupted_pair(6);
    let mut reversed = fx.examples.clone();
    reversed.reverse();
    let a = eval_pair(&f, &bw, &fx.examples, &cfg, &env);
    let c = eval_pair(&f, &bw, &reversed, &cfg, &env);
    assert!((a - c).abs() < 1e-12);
    assert!(a > 0.0 && a <= 1.0);
}

#[test]
fn faithful_pair_scores_one_and_broken_source_scores_the_floor() {
    let fx = corpus_fixture(10, 49);
    let b = builtin_backends();
    let env = env(&fx, &b);
    let cfg = toy_config();
    let f = GrammarPolicy::faithful(Direction::Forward, 2.0);
    let bw = GrammarPolicy::faithful(Direction::Backward, 2.0);
    assert_eq!(eval_pair(&f, &bw, &fx.examples, &cfg, &env), 1.0);

    let mut broken = fx.examples.iter().find(|e| !e.suite.cases.is_empty()).unwrap().clone();
    broken.s.surfaces.truncate(3);
    assert!(parse_surfaces(&broken.s.surfaces, Lang::MiniJ).is_err());
    let n = broken.suite.cases.len();
    let floor = omega_sf(0, n, cfg.feedback.epsilon).value;
    assert_eq!(eval_pair(&f, &bw, std::slice::from_ref(&broken), &cfg, &env), floor);
    assert!((floor - cfg.feedback.epsilon / (cfg.feedback.epsilon + n as f64)).abs() < 1e-15);
}
