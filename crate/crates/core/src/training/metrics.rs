use alloc::string::String;
use alloc::vec::Vec;

use crate::attacks::AttackConfig;
use crate::data::Dataset;
use crate::error::Result;
use crate::eval::{accuracy, evaluate};
use crate::nn::Model;
use crate::numerics::RngState;

/// What to measure at each evaluation point of a run.
#[derive(Clone, Default)]
pub struct EvalPlan<'a> {
    pub test: Option<&'a Dataset>,
    /// Robust accuracy is reported for each; the first also drives `beta_a`
    /// and best-checkpoint tracking.
    pub attacks: Vec<AttackConfig>,
    /// Evaluate on the first `eval_n` test samples (0 = all).
    pub eval_n: usize,
    /// Steps between evaluation points (0 = one epoch over the target set).
    pub every: usize,
    /// Skip the clean error on the training set.
    pub skip_train_err: bool,
    /// Milliseconds since an arbitrary origin; without it `wall_ms` is 0.
    pub clock: Option<&'a dyn Fn() -> f64>,
}

impl core::fmt::Debug for EvalPlan<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("EvalPlan")
            .field("test", &self.test.map(|d| d.name.as_str()))
            .field("attacks", &self.attacks)
            .field("eval_n", &self.eval_n)
            .field("every", &self.every)
            .field("skip_train_err", &self.skip_train_err)
            .field("clock", &self.clock.is_some())
            .finish()
    }
}

impl<'a> EvalPlan<'a> {
    pub fn on(test: &'a Dataset, attacks: Vec<AttackConfig>) -> Self {
        EvalPlan { test: Some(test), attacks, ..Default::default() }
    }

    /// Only the final step is recorded, with no measurements besides the loss.
    pub fn final_only(total_steps: usize) -> Self {
        EvalPlan { every: total_steps, skip_train_err: true, ..Default::default() }
    }

    pub(super) fn measure(&self, model: &Model, train: &Dataset, rng: &RngState) -> Result<EpochRecord> {
        let train_err = if self.skip_train_err { None } else { Some(1.0 - accuracy(model, train)?) };
        let mut rec = EpochRecord {
            step: 0,
            lr: 0.0,
            train_loss: 0.0,
            train_err,
            clean_acc: None,
            robust: Vec::new(),
            beta_s: None,
            beta_a: None,
            wall_ms: 0.0,
        };
        if let Some(test) = self.test {
            let subset;
            let test = if self.eval_n > 0 && self.eval_n < test.len() {
                subset = test.take(self.eval_n);
                &subset
            } else {
                test
            };
            let r = evaluate(model, test, &self.attacks, rng)?;
            rec.clean_acc = Some(r.clean_acc);
            rec.robust = r.robust_acc.into_iter().map(|(_, a)| a).collect();
            rec.beta_s = Some(r.beta_s);
            rec.beta_a = Some(r.beta_a);
        }
        Ok(rec)
    }
}

/// One evaluation point. Unmeasured quantities are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// Completed optimizer steps.
    pub step: usize,
    /// Learning rate of the last step.
    pub lr: f64,
    /// Mean objective over the steps since the previous record.
    pub train_loss: f64,
    pub train_err: Option<f64>,
    pub clean_acc: Option<f64>,
    /// Robust accuracy per configured attack.
    pub robust: Vec<f64>,
    pub beta_s: Option<f64>,
    pub beta_a: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestRecord {
    pub step: usize,
    pub robust_acc: f64,
    pub clean_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub attack_names: Vec<String>,
    pub records: Vec<EpochRecord>,
    /// Highest first-attack robust accuracy among records taken after the
    /// first learning-rate decay.
    pub best: Option<BestRecord>,
}

impl RunMetrics {
    pub fn new(attack_names: Vec<String>) -> Self {
        RunMetrics { attack_names, records: Vec::new(), best: None }
    }

    pub(super) fn push(&mut self, rec: EpochRecord, after_decay: bool) {
        if let (true, Some(&acc)) = (after_decay, rec.robust.first()) {
            if self.best.as_ref().is_none_or(|b| acc > b.robust_acc) {
                self.best = Some(BestRecord { step: rec.step, robust_acc: acc, clean_acc: rec.clean_acc });
            }
        }
        self.records.push(rec);
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}
