//! Per-sample losses and their gradients with respect to the logits.

use alloc::vec;

use crate::error::{OatError, Result};
use crate::numerics::{log_sum_exp, softmax_into, ProbVector};

/// Loss functions understood by the engine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    /// Cross entropy against a class index.
    CeHard,
    /// Cross entropy against a probability vector.
    CeSoft,
    /// KL(reference || softmax(logits)); the reference is a constant.
    Kl,
    /// Untargeted CW margin, `min(max_{i != y} z_i - z_y, kappa)`.
    CwMargin { kappa: f64 },
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::CeHard => "ce-hard",
            LossKind::CeSoft => "ce-soft",
            LossKind::Kl => "kl",
            LossKind::CwMargin { .. } => "cw-margin",
        }
    }

    fn wants_class(&self) -> bool {
        matches!(self, LossKind::CeHard | LossKind::CwMargin { .. })
    }
}

/// What a sample is scored against.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Dist(ProbVector),
}

impl Target {
    pub fn class(&self) -> Option<usize> {
        match self {
            Target::Class(k) => Some(*k),
            Target::Dist(_) => None,
        }
    }
}

/// A weighted per-sample objective term.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub kind: LossKind,
    pub target: Target,
    pub weight: f64,
}

impl Term {
    pub fn new(kind: LossKind, target: Target, weight: f64) -> Self {
        Term { kind, target, weight }
    }
}

/// Loss of one sample; writes dL/dlogits into `grad`.
pub fn sample_loss(kind: LossKind, logits: &[f64], target: &Target, grad: &mut [f64]) -> Result<f64> {
    let c = logits.len();
    match (kind.wants_class(), target) {
        (true, Target::Class(y)) if *y >= c => {
            return Err(OatError::LabelOutOfRange { label: *y, num_classes: c })
        }
        (true, Target::Class(_)) => {}
        (false, Target::Dist(t)) if t.len() != c => {
            return Err(OatError::ShapeMismatch { expected: c, got: t.len() })
        }
        (false, Target::Dist(_)) => {}
        _ => return Err(OatError::TargetMismatch(kind.name())),
    }
    match (kind, target) {
        (LossKind::CeHard, Target::Class(y)) => {
            softmax_into(logits, grad);
            grad[*y] -= 1.0;
            Ok(log_sum_exp(logits) - logits[*y])
        }
        (LossKind::CeSoft, Target::Dist(t)) | (LossKind::Kl, Target::Dist(t)) => {
            let t = t.as_slice();
            let lse = log_sum_exp(logits);
            softmax_into(logits, grad);
            let mass: f64 = t.iter().sum();
            let mut loss = 0.0;
            for i in 0..c {
                grad[i] = grad[i] * mass - t[i];
                if t[i] > 0.0 {
                    loss -= t[i] * (logits[i] - lse);
                    if kind == LossKind::Kl {
                        loss += t[i] * libm::log(t[i]);
                    }
                }
            }
            Ok(loss)
        }
        (LossKind::CwMargin { kappa }, Target::Class(y)) => {
            let y = *y;
            let mut best = usize::MAX;
            for i in 0..c {
                if i != y && (best == usize::MAX || logits[i] > logits[best]) {
                    best = i;
                }
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            if best == usize::MAX {
                return Err(OatError::invalid("cw margin needs at least two classes"));
            }
            let margin = logits[best] - logits[y];
            if margin < kappa {
                grad[best] = 1.0;
                grad[y] = -1.0;
                Ok(margin)
            } else {
                Ok(kappa)
            }
        }
        _ => unreachable!(),
    }
}

/// Loss of one sample without the gradient.
pub fn sample_loss_value(kind: LossKind, logits: &[f64], target: &Target) -> Result<f64> {
    let mut g = vec![0.0; logits.len()];
    sample_loss(kind, logits, target, &mut g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::softmax_stable;

    #[test]
    fn cw_margin_value() {
        let l = sample_loss_value(LossKind::CwMargin { kappa: 0.0 }, &[3.0, 1.0], &Target::Class(0)).unwrap();
        assert_eq!(l, -2.0);
        let l = sample_loss_value(LossKind::CwMargin { kappa: 0.0 }, &[1.0, 3.0], &Target::Class(0)).unwrap();
        assert_eq!(l, 0.0);
        let l = sample_loss_value(LossKind::CwMargin { kappa: 5.0 }, &[1.0, 3.0], &Target::Class(0)).unwrap();
        assert_eq!(l, 2.0);
    }

    #[test]
    fn target_form_is_checked() {
        let t = Target::Dist(ProbVector::uniform(2));
        assert!(matches!(
            sample_loss_value(LossKind::CeHard, &[0.0, 1.0], &t),
            Err(OatError::TargetMismatch(_))
        ));
        assert!(sample_loss_value(LossKind::Kl, &[0.0, 1.0], &Target::Class(1)).is_err());
        assert!(sample_loss_value(LossKind::CeHard, &[0.0, 1.0], &Target::Class(2)).is_err());
    }

    #[test]
    fn one_hot_soft_equals_hard() {
        let z = [0.3, -1.0, 2.2];
        let mut g1 = [0.0; 3];
        let mut g2 = [0.0; 3];
        let a = sample_loss(LossKind::CeHard, &z, &Target::Class(2), &mut g1).unwrap();
        let b = sample_loss(LossKind::CeSoft, &z, &Target::Dist(ProbVector::one_hot(3, 2)), &mut g2).unwrap();
        assert!((a - b).abs() < 1e-15);
        for i in 0..3 {
            assert!((g1[i] - g2[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_at_reference() {
        let z = [0.5, -0.25, 1.0, 0.0];
        let p = softmax_stable(&z);
        let l = sample_loss_value(LossKind::Kl, &z, &Target::Dist(p)).unwrap();
        assert!(l.abs() < 1e-12);
        let l = sample_loss_value(LossKind::Kl, &z, &Target::Dist(ProbVector::uniform(4))).unwrap();
        assert!(l > 0.0);
    }

    #[test]
    fn shift_invariance() {
        let z = [0.5, -0.25, 1.0];
        let zs = [100.5, 99.75, 101.0];
        for (kind, t) in [
            (LossKind::CeHard, Target::Class(1)),
            (LossKind::CeSoft, Target::Dist(ProbVector::new(alloc::vec![0.2, 0.3, 0.5]).unwrap())),
        ] {
            let a = sample_loss_value(kind, &z, &t).unwrap();
            let b = sample_loss_value(kind, &zs, &t).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }
}
