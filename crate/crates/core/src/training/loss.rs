//! Cross-entropy over rule decisions and the feedback-weighted ablation
//! losses.

use super::TrainError;
use crate::policy::{Decision, GrammarPolicy, Site};
use serde::{Deserialize, Serialize};

/// Probability assigned to a missing or misaligned outcome.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-position penalty for padding and misaligned positions, `-ln 1e-12`.
pub fn floor_penalty() -> f64 {
    -PROB_FLOOR.ln()
}

fn aligned(r: &Site, p: &Decision) -> bool {
    r.kind == p.kind && r.context == p.context && r.choice < p.log_probs.len()
}

/// Mean negative log-probability of the reference choices over
/// `ℓ = max(|reference|, |predicted|)` positions.
///
/// Position `i` scores `-ln p_i(reference[i].choice)`, floored at
/// [`PROB_FLOOR`], when both traces reach `i` at the same decision site.
/// Every other position scores the floor penalty.
pub fn ce_loss(reference: &[Site], predicted: &[Decision]) -> Result<f64, TrainError> {
    if reference.is_empty() {
        return Err(TrainError::EmptyReference);
    }
    let len = reference.len().max(predicted.len());
    let total: f64 = (0..len)
        .map(|i| match (reference.get(i), predicted.get(i)) {
            (Some(r), Some(p)) if aligned(r, p) => (-p.log_probs[r.choice]).min(floor_penalty()),
            _ => floor_penalty(),
        })
        .sum();
    Ok(total / len as f64)
}

/// [`ce_loss`] of the policy's own distributions and its gradient with
/// respect to the policy's trainable parameters. Floored positions carry no
/// gradient.
pub fn ce_loss_and_grad(
    policy: &GrammarPolicy,
    reference: &[Site],
    predicted: &[Decision],
) -> Result<(f64, Vec<f64>), TrainError> {
    let loss = ce_loss(reference, predicted)?;
    let len = reference.len().max(predicted.len()) as f64;
    let floor = PROB_FLOOR.ln();
    let (sites, weights): (Vec<Site>, Vec<f64>) = reference
        .iter()
        .zip(predicted)
        .filter(|(r, p)| aligned(r, p) && p.log_probs[r.choice] > floor)
        .map(|(r, _)| (*r, -1.0 / len))
        .unzip();
    Ok((loss, policy.weighted_grad(&sites, &weights)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LossMode {
    /// Plain cross-entropy, averaged over the mini-batch.
    #[default]
    Ce,
    /// `(1 - α_c)·CE + α_c·((1 - α_s)·CF + α_s·SF)`.
    Additive { alpha_c: f64, alpha_s: f64 },
    /// `CE / (CF·SF)`, normalised by the mini-batch sum of `1 / (CF·SF)`.
    Multiplicative,
}

impl LossMode {
    pub fn validate(&self) -> Result<(), TrainError> {
        if let LossMode::Additive { alpha_c, alpha_s } = *self {
            if !(0.0..=1.0).contains(&alpha_c) || !(0.0..=1.0).contains(&alpha_s) {
                return Err(TrainError::Config("additive weights must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Per-example losses and the coefficient each example's CE gradient
/// receives. Feedback terms are constants with respect to the parameters,
/// so only the CE part carries gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationLosses {
    pub losses: Vec<f64>,
    pub ce_coefficients: Vec<f64>,
}

/// Ablation losses for a mini-batch. With `sf` absent (compiler feedback
/// only) the additive form is `(1 - α_c)·CE + α_c·CF` and the
/// multiplicative weight is `1 / CF`. The plain CE mode returns the CE
/// values with mean-reduction coefficients.
pub fn ablation_losses(
    mode: LossMode,
    ce: &[f64],
    cf: &[f64],
    sf: Option<&[f64]>,
) -> Result<AblationLosses, TrainError> {
    let n = ce.len();
    if cf.len() != n || sf.is_some_and(|s| s.len() != n) {
        return Err(TrainError::Config("loss inputs differ in length".into()));
    }
    mode.validate()?;
    let sf_at = |i: usize| sf.map_or(1.0, |s| s[i]);
    match mode {
        LossMode::Ce => Ok(AblationLosses { losses: ce.to_vec(), ce_coefficients: vec![1.0 / n as f64; n] }),
        LossMode::Additive { alpha_c, alpha_s } => {
            let losses = (0..n)
                .map(|i| {
                    let feedback = match sf {
                        Some(s) => (1.0 - alpha_s) * cf[i] + alpha_s * s[i],
                        None => cf[i],
                    };
                    (1.0 - alpha_c) * ce[i] + alpha_c * feedback
                })
                .collect();
            Ok(AblationLosses { losses, ce_coefficients: vec![(1.0 - alpha_c) / n as f64; n] })
        }
        LossMode::Multiplicative => {
            let weights: Vec<f64> = (0..n).map(|i| 1.0 / (cf[i] * sf_at(i))).collect();
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(TrainError::Config("multiplicative weighting needs nonzero feedback".into()));
            }
            let total: f64 = weights.iter().sum();
            let ce_coefficients: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let losses = ce.iter().zip(&ce_coefficients).map(|(c, k)| c * k).collect();
            Ok(AblationLosses { losses, ce_coefficients })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::Kind;

    fn decision(kind: Kind, ctx: usize, probs: &[f64]) -> Decision {
        Decision {
            kind,
            context: ctx,
            choice: 0,
            log_prob: probs[0].ln(),
            log_probs: probs.iter().map(|p| p.ln()).collect(),
        }
    }

    #[test]
    fn one_hot_prediction_has_zero_loss() {
        let r = [Site { kind: Kind::Print, context: 0, choice: 0 }];
        assert_eq!(ce_loss(&r, &[decision(Kind::Print, 0, &[1.0, 0.0])]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_term_and_padding() {
        let r = [Site { kind: Kind::If, context: 2, choice: 1 }, Site { kind: Kind::Print, context: 3, choice: 0 }];
        let p = [decision(Kind::If, 2, &[1.0 / 3.0; 3])];
        let want = (3f64.ln() + floor_penalty()) / 2.0;
        assert!((ce_loss(&r, &p).unwrap() - want).abs() < 1e-12);
        assert!(matches!(ce_loss(&[], &p), Err(TrainError::EmptyReference)));
    }

    #[test]
    fn additive_fixture() {
        let out =
            ablation_losses(LossMode::Additive { alpha_c: 0.5, alpha_s: 0.5 }, &[1.0], &[2.0], Some(&[1.0])).unwrap();
        assert_eq!(out.losses, vec![1.25]);
        let out = ablation_losses(
            LossMode::Additive { alpha_c: 0.0, alpha_s: 0.3 },
            &[0.7, 2.0],
            &[2.0, 1.0],
            Some(&[0.1, 0.2]),
        )
        .unwrap();
        assert_eq!(out.losses, vec![0.7, 2.0]);
    }

    #[test]
    fn multiplicative_rejects_zero_feedback() {
        assert!(ablation_losses(LossMode::Multiplicative, &[1.0], &[0.0], Some(&[1.0])).is_err());
        let out = ablation_losses(LossMode::Multiplicative, &[1.0, 3.0], &[2.0, 1.0], None).unwrap();
        // Weights 1/2 and 1, total 3/2.
        assert!((out.losses[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((out.losses[1] - 2.0).abs() < 1e-15);
    }
}
