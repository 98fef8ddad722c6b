//! SGD with momentum, weight decay and a step learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{OatError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub total_steps: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { base_lr: 0.1, total_steps: 1000, batch_size: 64, momentum: 0.9, weight_decay: 2e-4, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(OatError::invalid("base_lr must be positive"));
        }
        if self.total_steps == 0 {
            return Err(OatError::invalid("total_steps must be positive"));
        }
        if self.batch_size < 2 {
            return Err(OatError::invalid("batch_size must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OatError::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(OatError::invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

/// Learning rate at `step` (0-based) of a `total`-step run: the base rate,
/// then divided by 10 at 50% and again at 75% of the run.
pub fn lr_at(base: f64, step: usize, total: usize) -> f64 {
    if 2 * step < total {
        base
    } else if 4 * step < 3 * total {
        0.1 * base
    } else {
        0.01 * base
    }
}

/// Heavy-ball SGD: `buf = m * buf + g + wd * theta; theta -= lr * buf`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    buf: Vec<f64>,
}

impl Sgd {
    pub fn new(n_params: usize, momentum: f64, weight_decay: f64) -> Self {
        Sgd { momentum, weight_decay, buf: vec![0.0; n_params] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        sgd_step(params, grads, &mut self.buf, lr, self.momentum, self.weight_decay)
    }
}

/// One update. Parameters are left untouched if the gradient or the result
/// is not finite.
pub fn sgd_step(params: &mut [f64], grads: &[f64], buf: &mut [f64], lr: f64, momentum: f64, wd: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != buf.len() {
        return Err(OatError::ShapeMismatch { expected: params.len(), got: grads.len() });
    }
    let mut next_buf = Vec::with_capacity(buf.len());
    for (i, ((&p, &g), &b)) in params.iter().zip(grads).zip(buf.iter()).enumerate() {
        let v = momentum * b + g + wd * p;
        if !v.is_finite() || !(p - lr * v).is_finite() {
            return Err(OatError::NonFinite { context: "sgd update", index: i, value: v });
        }
        next_buf.push(v);
    }
    for ((p, b), v) in params.iter_mut().zip(buf.iter_mut()).zip(next_buf) {
        *b = v;
        *p -= lr * v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_boundaries() {
        assert_eq!(lr_at(0.1, 0, 100), 0.1);
        assert_eq!(lr_at(0.1, 49, 100), 0.1);
        assert!((lr_at(0.1, 50, 100) - 0.01).abs() < 1e-15);
        assert!((lr_at(0.1, 74, 100) - 0.01).abs() < 1e-15);
        assert!((lr_at(0.1, 75, 100) - 0.001).abs() < 1e-15);
        assert!((lr_at(0.1, 99, 100) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn plain_step_and_momentum() {
        let mut p = vec![1.0, -2.0];
        let mut opt = Sgd::new(2, 0.9, 0.0);
        opt.step(&mut p, &[0.5, 1.0], 0.1).unwrap();
        assert_eq!(p, vec![0.95, -2.1]);
        opt.step(&mut p, &[0.5, 1.0], 0.1).unwrap();
        assert!((p[0] - (0.95 - 0.1 * 0.95)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks() {
        let mut p = vec![2.0];
        sgd_step(&mut p, &[0.0], &mut [0.0], 0.5, 0.0, 0.1).unwrap();
        assert!((p[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn non_finite_is_rejected_without_mutation() {
        let mut p = vec![1.0, 1.0];
        let r = sgd_step(&mut p, &[0.0, f64::NAN], &mut [0.0, 0.0], 0.1, 0.0, 0.0);
        assert!(matches!(r, Err(OatError::NonFinite { index: 1, .. })));
        assert_eq!(p, vec![1.0, 1.0]);
    }
}
