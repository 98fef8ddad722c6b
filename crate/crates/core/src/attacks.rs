//! l-inf bounded input attacks: FGSM, PGD and CW-margin PGD.
//!
//! Every attack keeps, per sample, the iterate with the highest loss seen so
//! far, starting from the clean input. The returned loss therefore never falls
//! below the clean loss.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite, OatError, Result};
use crate::nn::{GradMode, LossKind, Model, Target, Term};
use crate::numerics::{sign, ProbVector, RngState};

/// The canonical budget 8/255.
pub const EPS_8: f64 = 8.0 / 255.0;
/// The canonical PGD step 2/255.
pub const STEP_2: f64 = 2.0 / 255.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackConfig {
    pub eps: f64,
    pub steps: usize,
    pub step_size: f64,
    pub random_start: bool,
    pub loss: LossKind,
    pub clip: (f64, f64),
    /// Independent restarts; the best iterate over all of them is kept.
    pub restarts: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig::pgd(10)
    }
}

impl AttackConfig {
    /// PGD-`steps` on cross-entropy at eps 8/255, step 2/255, random start.
    pub fn pgd(steps: usize) -> Self {
        AttackConfig {
            eps: EPS_8,
            steps,
            step_size: STEP_2,
            random_start: true,
            loss: LossKind::CeHard,
            clip: (0.0, 1.0),
            restarts: 1,
        }
    }

    /// CW-`steps`: PGD driven by the margin loss with kappa 0.
    pub fn cw(steps: usize) -> Self {
        AttackConfig { loss: LossKind::CwMargin { kappa: 0.0 }, ..AttackConfig::pgd(steps) }
    }

    /// One signed step of size `eps` from the clean input.
    pub fn fgsm(eps: f64) -> Self {
        AttackConfig { eps, steps: 1, step_size: eps, random_start: false, ..AttackConfig::pgd(1) }
    }

    /// Named evaluation presets: `PGD<T>`, `CW<T>` (any T >= 1) and `FGSM`.
    pub fn preset(name: &str) -> Option<Self> {
        let upper = name.to_ascii_uppercase();
        if upper == "FGSM" {
            return Some(AttackConfig::fgsm(EPS_8));
        }
        let (ctor, digits): (fn(usize) -> Self, &str) = if let Some(d) = upper.strip_prefix("PGD") {
            (AttackConfig::pgd, d)
        } else {
            let d = upper.strip_prefix("CW")?;
            (AttackConfig::cw, d)
        };
        match digits.parse::<usize>() {
            Ok(t) if t > 0 => Some(ctor(t)),
            _ => None,
        }
    }

    pub fn with_eps(self, eps: f64) -> Self {
        AttackConfig { eps, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(OatError::invalid("clip range must satisfy lo < hi"));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0 && self.eps <= hi - lo) {
            return Err(OatError::invalid(format!("eps {} must lie in [0, clip span]", self.eps)));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(OatError::invalid("step_size must be positive"));
        }
        if self.steps == 1 && !self.random_start && self.step_size > self.eps && self.eps > 0.0 {
            return Err(OatError::invalid("single-step attack without random start needs step_size <= eps"));
        }
        if self.restarts == 0 {
            return Err(OatError::invalid("restarts must be at least 1"));
        }
        Ok(())
    }

    /// Short name such as `PGD20` or `CW100`.
    pub fn label(&self) -> String {
        match self.loss {
            LossKind::CwMargin { .. } => format!("CW{}", self.steps),
            _ if self.steps == 1 && !self.random_start => String::from("FGSM"),
            _ => format!("PGD{}", self.steps),
        }
    }
}

/// Result of an attack on a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvBatch {
    pub inputs: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Per-sample loss at the returned inputs.
    pub losses: Vec<f64>,
    /// Summed best-so-far loss after the clean evaluation and after every
    /// evaluated iterate; non-decreasing.
    pub trace: Vec<f64>,
}

impl AdvBatch {
    pub fn max_abs_delta(&self) -> f64 {
        self.deltas.iter().fold(0.0f64, |a, d| a.max(d.abs()))
    }
}

fn project(x: f64, x0: f64, eps: f64, (lo, hi): (f64, f64)) -> f64 {
    x.clamp(x0 - eps, x0 + eps).clamp(lo, hi)
}

/// Maximizes `sum_i L_i` over the eps-ball intersected with the clip box,
/// with the loss kind and target of each sample given by `terms` (weights are
/// ignored).
pub fn attack_terms(model: &Model, inputs: &[f64], terms: &[Term], cfg: &AttackConfig, rng: &mut RngState) -> Result<AdvBatch> {
    cfg.validate()?;
    let d = model.input_len();
    if inputs.len() != terms.len() * d {
        return Err(OatError::ShapeMismatch { expected: terms.len() * d, got: inputs.len() });
    }
    check_finite("attack inputs", inputs)?;
    let terms: Vec<Term> = terms.iter().map(|t| Term { weight: 1.0, ..t.clone() }).collect();
    let clean = model.sample_losses(inputs, &terms)?;
    let mut best_x = inputs.to_vec();
    let mut best = clean;
    let mut trace = vec![best.iter().sum::<f64>()];
    if cfg.eps > 0.0 && cfg.steps > 0 {
        for _ in 0..cfg.restarts {
            let mut x: Vec<f64> = inputs.to_vec();
            if cfg.random_start {
                for (xi, &x0) in x.iter_mut().zip(inputs) {
                    *xi = project(x0 + rng.uniform_range(-cfg.eps, cfg.eps), x0, cfg.eps, cfg.clip);
                }
            }
            for _ in 0..cfg.steps {
                let g = model.weighted_loss_and_grads(&x, &terms, GradMode::InputOnly)?;
                check_finite("attack input gradient", &g.input_grads)?;
                keep_best(&mut best_x, &mut best, &x, &g.per_sample, d);
                trace.push(best.iter().sum());
                for ((xi, &x0), &gi) in x.iter_mut().zip(inputs).zip(&g.input_grads) {
                    *xi = project(*xi + cfg.step_size * sign(gi), x0, cfg.eps, cfg.clip);
                }
            }
            let losses = model.sample_losses(&x, &terms)?;
            keep_best(&mut best_x, &mut best, &x, &losses, d);
            trace.push(best.iter().sum());
        }
    }
    let deltas = best_x.iter().zip(inputs).map(|(a, b)| a - b).collect();
    Ok(AdvBatch { inputs: best_x, deltas, losses: best, trace })
}

fn keep_best(best_x: &mut [f64], best: &mut [f64], x: &[f64], losses: &[f64], d: usize) {
    for (i, &l) in losses.iter().enumerate() {
        if l > best[i] {
            best[i] = l;
            best_x[i * d..(i + 1) * d].copy_from_slice(&x[i * d..(i + 1) * d]);
        }
    }
}

/// Untargeted attack of `cfg.loss` against the given targets.
pub fn pgd_linf(model: &Model, inputs: &[f64], targets: &[Target], cfg: &AttackConfig, rng: &mut RngState) -> Result<AdvBatch> {
    let terms: Vec<Term> = targets.iter().map(|t| Term::new(cfg.loss, t.clone(), 1.0)).collect();
    attack_terms(model, inputs, &terms, cfg, rng)
}

/// Attacks `[x_t, x_o]` in one pass: the target half against its labels with
/// `cfg.loss`, the OOD half against the uniform label with soft cross-entropy.
pub fn attack_mixed_batch(
    model: &Model,
    x_t: &[f64],
    y: &[usize],
    x_o: &[f64],
    cfg: &AttackConfig,
    rng: &mut RngState,
) -> Result<AdvBatch> {
    let d = model.input_len();
    let n_o = x_o.len() / d.max(1);
    let unif = ProbVector::uniform(model.num_classes());
    let mut terms: Vec<Term> = y.iter().map(|&c| Term::new(cfg.loss, Target::Class(c), 1.0)).collect();
    terms.extend((0..n_o).map(|_| Term::new(LossKind::CeSoft, Target::Dist(unif.clone()), 1.0)));
    let inputs = [x_t, x_o].concat();
    attack_terms(model, &inputs, &terms, cfg, rng)
}
