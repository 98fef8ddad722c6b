//! Confidence-ranked OOD selection with an extra "outlier" class.

use alloc::format;
use alloc::vec::Vec;

use super::{gather, Dataset, OOD_LABEL};
use crate::error::{OatError, Result};
use crate::eval::EVAL_CHUNK;
use crate::nn::{ModelSpec, TrainConfig};
use crate::numerics::{softmax_stable, RngState};
use crate::training::{train_standard, EvalPlan};

#[derive(Clone, Debug, PartialEq)]
pub struct MiningResult {
    /// Kept pool samples, most outlier-like first, sentinel-labeled.
    pub kept: Dataset,
    /// Outlier-class probability of each kept sample, non-increasing.
    pub scores: Vec<f64>,
    /// Pool indices of the kept samples.
    pub indices: Vec<usize>,
}

/// Trains a `(c+1)`-way classifier on the target set plus pool samples
/// labeled `c`, then keeps the `keep` pool samples it scores as most likely
/// to be class `c`. `spec.num_classes` is ignored and set to `c + 1`.
pub fn mine_ood(pool: &Dataset, target: &Dataset, keep: usize, spec: &ModelSpec, cfg: &TrainConfig, rng: &RngState) -> Result<MiningResult> {
    if keep > pool.len() {
        return Err(OatError::InsufficientSamples { needed: keep, got: pool.len() });
    }
    if pool.is_empty() || target.is_empty() {
        return Err(OatError::EmptyDataset(format!("{} / {}", pool.name, target.name)));
    }
    let c = target.num_classes();
    let m = pool.len().min(target.len());
    let picks: Vec<usize> = rng.split(0).permutation(pool.len()).into_iter().take(m).collect();
    let outliers = pool.subset(&picks);
    let combined = Dataset::new(
        [target.images(), outliers.images()].concat(),
        target.raw_labels().iter().copied().chain(core::iter::repeat_n(c as u16, m)).collect(),
        target.dims(),
        c + 1,
        "mining",
    )?;
    let spec = ModelSpec { num_classes: c + 1, ..spec.clone() };
    let (model, _) = train_standard(&spec, &combined, cfg, &EvalPlan::final_only(cfg.total_steps), &rng.split(1))?;

    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(pool.len());
    for start in (0..pool.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(pool.len());
        let logits = model.forward(&gather(pool, (start..end).collect()).inputs)?;
        for (k, z) in logits.chunks(c + 1).enumerate() {
            scored.push((softmax_stable(z).as_slice()[c], start + k));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(keep);
    let indices: Vec<usize> = scored.iter().map(|s| s.1).collect();
    let mut kept = pool.subset(&indices).with_labels(alloc::vec![OOD_LABEL; keep])?;
    kept.name = format!("{}-mined", pool.name);
    Ok(MiningResult { kept, scores: scored.into_iter().map(|s| s.0).collect(), indices })
}
