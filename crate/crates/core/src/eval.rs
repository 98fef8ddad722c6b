//! Clean and robust accuracy and the empirical standard/adversarial losses.

use alloc::string::String;
use alloc::vec::Vec;

use crate::attacks::{pgd_linf, AttackConfig};
use crate::data::{gather, Dataset};
use crate::error::{OatError, Result};
use crate::nn::{argmax, LossKind, Model, Target, Term};
use crate::numerics::RngState;

/// Samples per evaluation chunk. Each chunk's attack uses `rng.split(chunk)`.
pub const EVAL_CHUNK: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub clean_acc: f64,
    /// `(attack name, robust accuracy)` in configuration order.
    pub robust_acc: Vec<(String, f64)>,
    pub beta_s: f64,
    /// Adversarial loss under the first attack (equal to `beta_s` without attacks).
    pub beta_a: f64,
    pub n_eval: usize,
}

impl EvalReport {
    pub fn robust(&self, name: &str) -> Option<f64> {
        self.robust_acc.iter().find(|(n, _)| n == name).map(|&(_, a)| a)
    }
}

fn check_labeled(model: &Model, d: &Dataset) -> Result<Vec<usize>> {
    if d.is_empty() {
        return Err(OatError::EmptyDataset(d.name.clone()));
    }
    if d.image_len() != model.input_len() {
        return Err(OatError::ShapeMismatch { expected: model.input_len(), got: d.image_len() });
    }
    let labels = d.labels()?;
    if let Some(&l) = labels.iter().find(|&&l| l >= model.num_classes()) {
        return Err(OatError::LabelOutOfRange { label: l, num_classes: model.num_classes() });
    }
    Ok(labels)
}

/// Per-chunk pass over a labeled dataset: `f(chunk index, inputs, labels)`.
fn for_chunks(d: &Dataset, labels: &[usize], mut f: impl FnMut(usize, &[f64], &[usize]) -> Result<()>) -> Result<()> {
    for (k, start) in (0..d.len()).step_by(EVAL_CHUNK).enumerate() {
        let end = (start + EVAL_CHUNK).min(d.len());
        let batch = gather(d, (start..end).collect());
        f(k, &batch.inputs, &labels[start..end])?;
    }
    Ok(())
}

fn count_correct(model: &Model, x: &[f64], y: &[usize]) -> Result<usize> {
    let logits = model.forward(x)?;
    Ok(logits.chunks(model.num_classes()).zip(y).filter(|(z, &t)| argmax(z) == t).count())
}

/// Fraction of samples whose argmax logit (lowest index on ties) is the label.
pub fn accuracy(model: &Model, d: &Dataset) -> Result<f64> {
    let labels = check_labeled(model, d)?;
    let mut correct = 0;
    for_chunks(d, &labels, |_, x, y| {
        correct += count_correct(model, x, y)?;
        Ok(())
    })?;
    Ok(correct as f64 / d.len() as f64)
}

/// Accuracy on the attacked inputs.
pub fn robust_accuracy(model: &Model, d: &Dataset, cfg: &AttackConfig, rng: &RngState) -> Result<f64> {
    Ok(attacked_pass(model, d, cfg, rng)?.0)
}

/// Mean clean and attacked cross-entropy on the same samples.
pub fn estimate_expected_losses(model: &Model, d: &Dataset, cfg: &AttackConfig, rng: &RngState) -> Result<(f64, f64)> {
    let (_, beta_s, beta_a) = attacked_pass(model, d, &AttackConfig { loss: LossKind::CeHard, ..*cfg }, rng)?;
    Ok((beta_s, beta_a))
}

/// (robust accuracy, mean clean CE, mean attacked CE).
fn attacked_pass(model: &Model, d: &Dataset, cfg: &AttackConfig, rng: &RngState) -> Result<(f64, f64, f64)> {
    let labels = check_labeled(model, d)?;
    let (mut correct, mut clean_loss, mut adv_loss) = (0usize, 0.0, 0.0);
    for_chunks(d, &labels, |k, x, y| {
        let targets: Vec<Target> = y.iter().map(|&c| Target::Class(c)).collect();
        let adv = pgd_linf(model, x, &targets, cfg, &mut rng.split(k as u64))?;
        correct += count_correct(model, &adv.inputs, y)?;
        let ce: Vec<Term> = targets.into_iter().map(|t| Term::new(LossKind::CeHard, t, 1.0)).collect();
        clean_loss += model.sample_losses(x, &ce)?.iter().sum::<f64>();
        adv_loss += model.sample_losses(&adv.inputs, &ce)?.iter().sum::<f64>();
        Ok(())
    })?;
    let n = d.len() as f64;
    Ok((correct as f64 / n, clean_loss / n, adv_loss / n))
}

/// Clean accuracy, robust accuracy per attack, and the expected losses under
/// the first attack. Attack `i` uses stream `rng.split(i)`.
pub fn evaluate(model: &Model, d: &Dataset, attacks: &[AttackConfig], rng: &RngState) -> Result<EvalReport> {
    let clean_acc = accuracy(model, d)?;
    let mut robust_acc = Vec::with_capacity(attacks.len());
    let mut betas = None;
    for (i, cfg) in attacks.iter().enumerate() {
        let stream = rng.split(i as u64);
        let (acc, bs, ba) = attacked_pass(model, d, cfg, &stream)?;
        robust_acc.push((cfg.label(), acc));
        if betas.is_none() {
            betas = Some(if cfg.loss == LossKind::CeHard { (bs, ba) } else { estimate_expected_losses(model, d, cfg, &stream)? });
        }
    }
    let (beta_s, beta_a) = match betas {
        Some(b) => b,
        None => {
            let b = clean_loss(model, d)?;
            (b, b)
        }
    };
    Ok(EvalReport { clean_acc, robust_acc, beta_s, beta_a, n_eval: d.len() })
}

fn clean_loss(model: &Model, d: &Dataset) -> Result<f64> {
    let labels = check_labeled(model, d)?;
    let mut total = 0.0;
    for_chunks(d, &labels, |_, x, y| {
        let ce: Vec<Term> = y.iter().map(|&c| Term::new(LossKind::CeHard, Target::Class(c), 1.0)).collect();
        total += model.sample_losses(x, &ce)?.iter().sum::<f64>();
        Ok(())
    })?;
    Ok(total / d.len() as f64)
}

/// Mean entropy (nats) of the predicted distribution over a dataset; labels
/// are not read.
pub fn mean_prediction_entropy(model: &Model, d: &Dataset) -> Result<f64> {
    if d.is_empty() {
        return Err(OatError::EmptyDataset(d.name.clone()));
    }
    let mut total = 0.0;
    for start in (0..d.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(d.len());
        let logits = model.forward(&gather(d, (start..end).collect()).inputs)?;
        total += logits.chunks(model.num_classes()).map(|z| crate::numerics::softmax_stable(z).entropy()).sum::<f64>();
    }
    Ok(total / d.len() as f64)
}
