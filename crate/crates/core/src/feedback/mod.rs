//! Reward kernels: compiler feedback with a length penalty, test-pass
//! feedback, and the KL-penalised back-to-back rewards.

mod backend;

pub use backend::{map_position, render_with_offsets, BackendError, CompileBackend, ExternalBackend, TIMEOUT_ENV};

use crate::kwtok::TokenSeq;
use crate::minilang::{parse_surfaces, Diagnostic};
use crate::symexec::{run_suite, SuiteRun, TestSuite};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("decision traces differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid feedback config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    pub epsilon: f64,
    pub beta: f64,
    /// Fuel for running unit tests on reconstructed programs.
    pub test_fuel: u64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, beta: DEFAULT_BETA, test_fuel: crate::symexec::DEFAULT_TEST_FUEL }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        if !(self.epsilon > 0.0) {
            return Err(FeedbackError::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(FeedbackError::InvalidConfig("beta must be non-negative".into()));
        }
        Ok(())
    }
}

/// Compiler feedback from a diagnostic: 2 when the candidate compiles,
/// otherwise the first error position over `len + 1`. An empty candidate
/// scores 0.
pub fn omega_compiler_from(diagnostic: &Diagnostic, len: usize) -> f64 {
    if len == 0 {
        return 0.0;
    }
    if diagnostic.ok {
        return 2.0;
    }
    let f = diagnostic.first_error_token.unwrap_or(len).clamp(1, len);
    f as f64 / (len as f64 + 1.0)
}

pub fn omega_compiler(t_hat: &TokenSeq, backend: &CompileBackend) -> Result<f64, FeedbackError> {
    if t_hat.is_empty() {
        return Ok(0.0);
    }
    Ok(omega_compiler_from(&backend.check(&t_hat.surfaces)?, t_hat.len()))
}

/// exp(-(1/2)((|t̂| - |t|) / (|t| / 4))^2).
pub fn length_factor(ref_len: usize, hyp_len: usize) -> Result<f64, FeedbackError> {
    if ref_len == 0 {
        return Err(FeedbackError::EmptyReference);
    }
    let sigma = ref_len as f64 / 4.0;
    let z = (hyp_len as f64 - ref_len as f64) / sigma;
    Ok((-0.5 * z * z).exp())
}

pub fn omega_cf_from(compiler: f64, ref_len: usize, hyp_len: usize) -> Result<f64, FeedbackError> {
    Ok(compiler * length_factor(ref_len, hyp_len)?)
}

pub fn omega_cf(t: &TokenSeq, t_hat: &TokenSeq, backend: &CompileBackend) -> Result<f64, FeedbackError> {
    if t.is_empty() {
        return Err(FeedbackError::EmptyReference);
    }
    omega_cf_from(omega_compiler(t_hat, backend)?, t.len(), t_hat.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfScore {
    pub value: f64,
    pub passes: usize,
    pub total: usize,
    /// Set when the suite had no cases and the value is the ε/ε default.
    pub no_tests: bool,
}

/// (ε + passes) / (ε + total).
pub fn omega_sf(passes: usize, total: usize, epsilon: f64) -> SfScore {
    let value = (epsilon + passes as f64) / (epsilon + total as f64);
    SfScore { value, passes, total, no_tests: total == 0 }
}

pub fn omega_sf_run(run: &SuiteRun, epsilon: f64) -> SfScore {
    omega_sf(run.passes, run.verdicts.len(), epsilon)
}

/// Mean over decisions of KL(p || q), both given as log-probabilities over
/// the same rule set per decision.
pub fn kl_divergence(policy: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64, FeedbackError> {
    if policy.len() != reference.len() {
        return Err(FeedbackError::LengthMismatch(policy.len(), reference.len()));
    }
    if policy.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, q) in policy.iter().zip(reference) {
        if p.len() != q.len() {
            return Err(FeedbackError::LengthMismatch(p.len(), q.len()));
        }
        total +=
            p.iter().zip(q).filter(|(lp, _)| lp.is_finite()).map(|(lp, lq)| lp.exp() * (lp - lq)).sum::<f64>().max(0.0);
    }
    Ok(total / policy.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub omega_cf_fwd: f64,
    pub omega_cf_bwd: f64,
    pub omega_sf: f64,
    pub kl_fwd: f64,
    pub kl_bwd: f64,
    pub r_fwd: f64,
    pub r_bwd: f64,
    pub no_tests: bool,
}

impl RewardBreakdown {
    pub fn compose(omega_cf_fwd: f64, omega_cf_bwd: f64, sf: SfScore, kl_fwd: f64, kl_bwd: f64, beta: f64) -> Self {
        RewardBreakdown {
            omega_cf_fwd,
            omega_cf_bwd,
            omega_sf: sf.value,
            kl_fwd,
            kl_bwd,
            r_fwd: omega_cf_fwd + sf.value - beta * kl_fwd,
            r_bwd: omega_cf_bwd + sf.value - beta * kl_bwd,
            no_tests: sf.no_tests,
        }
    }
}

/// Inputs of one back-to-back example: source `s`, reference `t`, forward
/// output `t_hat` and its back-translation `s_hat`.
pub struct B2bExample<'a> {
    pub s: &'a TokenSeq,
    pub t: &'a TokenSeq,
    pub t_hat: &'a TokenSeq,
    pub s_hat: &'a TokenSeq,
    pub suite: &'a TestSuite,
}

pub struct Backends<'a> {
    /// Checks target-language candidates.
    pub target: &'a CompileBackend,
    /// Checks reconstructed source programs.
    pub source: &'a CompileBackend,
}

/// Forward and backward rewards. The tests run on `s_hat`, which must also
/// parse under the built-in front end for execution; otherwise every case
/// counts as failed.
pub fn b2b_rewards(
    ex: &B2bExample,
    backends: &Backends,
    kl_fwd: f64,
    kl_bwd: f64,
    config: &FeedbackConfig,
) -> Result<RewardBreakdown, FeedbackError> {
    let cf_fwd = omega_cf(ex.t, ex.t_hat, backends.target)?;
    let cf_bwd = omega_cf(ex.s, ex.s_hat, backends.source)?;
    let program = parse_surfaces(&ex.s_hat.surfaces, ex.s_hat.lang).ok();
    let run = run_suite(ex.suite, program.as_ref(), config.test_fuel);
    let sf = omega_sf_run(&run, config.epsilon);
    Ok(RewardBreakdown::compose(cf_fwd, cf_bwd, sf, kl_fwd, kl_bwd, config.beta))
}
