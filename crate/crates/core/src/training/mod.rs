//! Training procedures: standard, PGD-AT, TRADES, OAT-A/S, OAT+Mixup,
//! OAT+UID and the randomization test.
//!
//! Every step draws its randomness from streams keyed by `(role, step)`, so
//! the target batch of step `k` is the same whatever the objective. This is
//! what makes the degenerate settings (zero budget, `beta = 0`,
//! `alpha_uid = 0`) reproduce their simpler counterparts bit for bit.

mod metrics;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::attacks::{attack_terms, pgd_linf, AttackConfig};
use crate::data::{gather, randomize_labels, sample_batch, Batch, Dataset, OOD_LABEL};
use crate::error::{OatError, Result};
use crate::nn::{build_model, lr_at, GradMode, LossKind, Model, ModelSpec, Sgd, Target, Term, TrainConfig};
use crate::numerics::{softmax_stable, ProbVector, RngState};

pub use metrics::{EpochRecord, EvalPlan, RunMetrics};

const ROLE_INIT: u64 = 0;
const ROLE_TARGET: u64 = 1;
const ROLE_OOD: u64 = 2;
const ROLE_UID: u64 = 3;
const ROLE_ATTACK: u64 = 4;
const ROLE_MIX: u64 = 5;
const ROLE_EVAL: u64 = 6;
const ROLE_RANDOM_LABELS: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OatMode {
    /// Adversarial: both halves are attacked before the update.
    A,
    /// Standard: clean halves.
    S,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OatConfig {
    pub alpha: f64,
    pub mode: OatMode,
    /// Required in mode A, absent in mode S.
    pub attack: Option<AttackConfig>,
}

impl OatConfig {
    pub fn adversarial(alpha: f64, attack: AttackConfig) -> Self {
        OatConfig { alpha, mode: OatMode::A, attack: Some(attack) }
    }

    pub fn standard(alpha: f64) -> Self {
        OatConfig { alpha, mode: OatMode::S, attack: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixupOatConfig {
    /// Fraction of the mixing partners replaced by OOD samples.
    pub gamma: f64,
    /// Concentration of the symmetric Beta law of the mixing coefficient.
    pub mix_a: f64,
}

impl Default for MixupOatConfig {
    fn default() -> Self {
        MixupOatConfig { gamma: 0.0, mix_a: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UidOatConfig {
    pub alpha_in: f64,
    pub alpha_o: f64,
    pub alpha_uid: f64,
    pub attack: AttackConfig,
}

impl UidOatConfig {
    pub fn equal(attack: AttackConfig) -> Self {
        UidOatConfig { alpha_in: 1.0 / 3.0, alpha_o: 1.0 / 3.0, alpha_uid: 1.0 / 3.0, attack }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    Standard,
    PgdAt(AttackConfig),
    Trades { attack: AttackConfig, beta: f64 },
    Oat(OatConfig),
    Mixup(MixupOatConfig),
    OatUid(UidOatConfig),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Standard => "standard",
            Objective::PgdAt(_) => "pgd",
            Objective::Trades { .. } => "trades",
            Objective::Oat(OatConfig { mode: OatMode::A, .. }) => "oat-a",
            Objective::Oat(OatConfig { mode: OatMode::S, .. }) => "oat-s",
            Objective::Mixup(_) => "oat-mixup",
            Objective::OatUid(_) => "oat-uid",
        }
    }

    fn attack(&self) -> Option<&AttackConfig> {
        match self {
            Objective::PgdAt(a) | Objective::Trades { attack: a, .. } => Some(a),
            Objective::Oat(o) => o.attack.as_ref(),
            Objective::OatUid(u) => Some(&u.attack),
            _ => None,
        }
    }
}

/// Datasets a trainer draws from.
#[derive(Clone, Copy, Debug)]
pub struct Sources<'a> {
    pub target: &'a Dataset,
    pub ood: Option<&'a Dataset>,
    /// Pseudo-labeled unlabeled-in-distribution samples.
    pub uid: Option<&'a Dataset>,
}

impl<'a> Sources<'a> {
    pub fn target(target: &'a Dataset) -> Self {
        Sources { target, ood: None, uid: None }
    }

    pub fn with_ood(target: &'a Dataset, ood: &'a Dataset) -> Self {
        Sources { target, ood: Some(ood), uid: None }
    }
}

/// One gradient pass: inputs with their weighted per-sample terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub inputs: Vec<f64>,
    pub terms: Vec<Term>,
}

/// Per-source sample counts of a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub target: usize,
    pub ood: usize,
    pub uid: usize,
}

/// Step-by-step trainer over a fixed objective.
pub struct Trainer<'a> {
    model: Model,
    opt: Sgd,
    cfg: TrainConfig,
    objective: Objective,
    sources: Sources<'a>,
    rng: RngState,
    step: usize,
    unif: ProbVector,
}

fn require<'b>(d: Option<&'b Dataset>, what: &str) -> Result<&'b Dataset> {
    match d {
        Some(d) if !d.is_empty() => Ok(d),
        Some(d) => Err(OatError::EmptyDataset(d.name.clone())),
        None => Err(OatError::EmptyDataset(String::from(what))),
    }
}

impl<'a> Trainer<'a> {
    /// Fresh model initialized from `rng.split(0)`.
    pub fn new(spec: &ModelSpec, cfg: &TrainConfig, objective: Objective, sources: Sources<'a>, rng: &RngState) -> Result<Self> {
        let model = build_model(spec, &mut rng.split(ROLE_INIT))?;
        Trainer::with_model(model, cfg, objective, sources, rng)
    }

    pub fn with_model(model: Model, cfg: &TrainConfig, objective: Objective, sources: Sources<'a>, rng: &RngState) -> Result<Self> {
        cfg.validate()?;
        let t = Trainer {
            opt: Sgd::new(model.param_count(), cfg.momentum, cfg.weight_decay),
            unif: ProbVector::uniform(model.num_classes()),
            model,
            cfg: cfg.clone(),
            objective,
            sources,
            rng: rng.clone(),
            step: 0,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let target = self.sources.target;
        if target.is_empty() {
            return Err(OatError::EmptyDataset(target.name.clone()));
        }
        if target.image_len() != self.model.input_len() {
            return Err(OatError::ShapeMismatch { expected: self.model.input_len(), got: target.image_len() });
        }
        if target.raw_labels().iter().any(|&l| l == OOD_LABEL || l as usize >= self.model.num_classes()) {
            return Err(OatError::invalid("target set must be fully labeled within the model's classes"));
        }
        if let Some(a) = self.objective.attack() {
            a.validate()?;
        }
        let n = self.cfg.batch_size;
        match &self.objective {
            Objective::Standard | Objective::PgdAt(_) => {}
            Objective::Trades { attack, beta } => {
                if attack.loss != LossKind::Kl {
                    return Err(OatError::invalid("TRADES needs an attack on the kl loss"));
                }
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(OatError::invalid("TRADES beta must be non-negative"));
                }
            }
            Objective::Oat(o) => {
                if !n.is_multiple_of(2) {
                    return Err(OatError::invalid("OAT needs an even batch size"));
                }
                if !(o.alpha.is_finite() && o.alpha >= 0.0) {
                    return Err(OatError::invalid("alpha must be non-negative"));
                }
                match (o.mode, o.attack.is_some()) {
                    (OatMode::A, false) => return Err(OatError::invalid("OAT-A needs an attack")),
                    (OatMode::S, true) => return Err(OatError::invalid("OAT-S takes no attack")),
                    _ => {}
                }
                self.check_ood(require(self.sources.ood, "ood")?)?;
            }
            Objective::Mixup(m) => {
                if !(0.0..=1.0).contains(&m.gamma) {
                    return Err(OatError::invalid("gamma must lie in [0, 1]"));
                }
                if !(m.mix_a.is_finite() && m.mix_a > 0.0) {
                    return Err(OatError::invalid("mix_a must be positive"));
                }
                if self.ood_count_mixup() > 0 {
                    self.check_ood(require(self.sources.ood, "ood")?)?;
                }
            }
            Objective::OatUid(u) => {
                if [u.alpha_in, u.alpha_o, u.alpha_uid].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(OatError::invalid("UID weights must be non-negative"));
                }
                if u.alpha_o > 0.0 {
                    self.check_ood(require(self.sources.ood, "ood")?)?;
                }
                if u.alpha_uid > 0.0 {
                    let d = require(self.sources.uid, "uid")?;
                    if d.image_len() != self.model.input_len() {
                        return Err(OatError::ShapeMismatch { expected: self.model.input_len(), got: d.image_len() });
                    }
                    d.labels()?;
                }
                if u.alpha_o == 0.0 && u.alpha_uid == 0.0 && n < 2 {
                    return Err(OatError::invalid("batch too small"));
                }
            }
        }
        Ok(())
    }

    fn check_ood(&self, d: &Dataset) -> Result<()> {
        if d.image_len() != self.model.input_len() {
            return Err(OatError::ShapeMismatch { expected: self.model.input_len(), got: d.image_len() });
        }
        Ok(())
    }

    fn ood_count_mixup(&self) -> usize {
        match &self.objective {
            Objective::Mixup(m) => libm::floor(self.cfg.batch_size as f64 * m.gamma) as usize,
            _ => 0,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Samples drawn from each source per step.
    pub fn split(&self) -> Split {
        let n = self.cfg.batch_size;
        match &self.objective {
            Objective::Oat(_) => Split { target: n / 2, ood: n - n / 2, uid: 0 },
            Objective::Mixup(_) => Split { target: n, ood: self.ood_count_mixup(), uid: 0 },
            Objective::OatUid(u) => {
                let target = n / 2;
                let rest = n - target;
                match (u.alpha_o > 0.0, u.alpha_uid > 0.0) {
                    (true, true) => Split { target, ood: rest / 2, uid: rest - rest / 2 },
                    (true, false) => Split { target, ood: rest, uid: 0 },
                    (false, true) => Split { target, ood: 0, uid: rest },
                    (false, false) => Split { target: n, ood: 0, uid: 0 },
                }
            }
            _ => Split { target: n, ood: 0, uid: 0 },
        }
    }

    fn stream(&self, role: u64) -> RngState {
        self.rng.split2(role, self.step as u64)
    }

    /// The gradient passes of the current step (attacks already applied).
    pub fn step_parts(&self) -> Result<Vec<Part>> {
        let split = self.split();
        let target = self.sources.target;
        let tb = sample_batch(target, split.target, &mut self.stream(ROLE_TARGET))?;
        let y = tb.classes(target)?;
        let hard = |w: f64, kind: LossKind| -> Vec<Term> { y.iter().map(|&c| Term::new(kind, Target::Class(c), w)).collect() };
        let nt = split.target as f64;
        let parts = match &self.objective {
            Objective::Standard => vec![Part { inputs: tb.inputs, terms: hard(1.0 / nt, LossKind::CeHard) }],
            Objective::PgdAt(attack) => {
                let targets: Vec<Target> = y.iter().map(|&c| Target::Class(c)).collect();
                let adv = pgd_linf(&self.model, &tb.inputs, &targets, attack, &mut self.stream(ROLE_ATTACK))?;
                debug_assert!(adv.max_abs_delta() <= attack.eps + 1e-9);
                vec![Part { inputs: adv.inputs, terms: hard(1.0 / nt, LossKind::CeHard) }]
            }
            Objective::Trades { attack, beta } => {
                let logits = self.model.forward(&tb.inputs)?;
                let refs: Vec<Target> = logits.chunks(self.model.num_classes()).map(|z| Target::Dist(softmax_stable(z))).collect();
                let adv = pgd_linf(&self.model, &tb.inputs, &refs, attack, &mut self.stream(ROLE_ATTACK))?;
                debug_assert!(adv.max_abs_delta() <= attack.eps + 1e-9);
                let kl = refs.into_iter().map(|t| Term::new(LossKind::Kl, t, beta / nt)).collect();
                vec![
                    Part { inputs: tb.inputs, terms: hard(1.0 / nt, LossKind::CeHard) },
                    Part { inputs: adv.inputs, terms: kl },
                ]
            }
            Objective::Oat(o) => {
                let ood = self.ood_batch(split.ood)?;
                let no = split.ood as f64;
                let mut terms = hard(0.5 / nt, LossKind::CeHard);
                terms.extend(self.uniform_terms(split.ood, 0.5 * o.alpha / no));
                let inputs = [tb.inputs, ood.inputs].concat();
                let inputs = match &o.attack {
                    Some(attack) => self.attack_mixed(&inputs, &terms, attack)?,
                    None => inputs,
                };
                vec![Part { inputs, terms }]
            }
            Objective::Mixup(m) => {
                let ood = self.ood_batch(split.ood)?;
                let (inputs, soft) = mix_batch(&tb, &y, &ood, self.model.num_classes(), m.mix_a, &mut self.stream(ROLE_MIX))?;
                let terms = soft.into_iter().map(|p| Term::new(LossKind::CeSoft, Target::Dist(p), 1.0 / nt)).collect();
                vec![Part { inputs, terms }]
            }
            Objective::OatUid(u) => {
                let mut terms = hard(u.alpha_in / nt, LossKind::CeHard);
                let mut inputs = tb.inputs;
                if split.ood > 0 {
                    let ood = self.ood_batch(split.ood)?;
                    terms.extend(self.uniform_terms(split.ood, u.alpha_o / split.ood as f64));
                    inputs.extend_from_slice(&ood.inputs);
                }
                if split.uid > 0 {
                    let uid = require(self.sources.uid, "uid")?;
                    let ub = sample_batch(uid, split.uid, &mut self.stream(ROLE_UID))?;
                    let w = u.alpha_uid / split.uid as f64;
                    terms.extend(ub.classes(uid)?.into_iter().map(|c| Term::new(LossKind::CeHard, Target::Class(c), w)));
                    inputs.extend_from_slice(&ub.inputs);
                }
                let inputs = self.attack_mixed(&inputs, &terms, &u.attack)?;
                vec![Part { inputs, terms }]
            }
        };
        Ok(parts)
    }

    fn ood_batch(&self, n: usize) -> Result<Batch> {
        if n == 0 {
            return Ok(Batch { inputs: Vec::new(), indices: Vec::new() });
        }
        sample_batch(require(self.sources.ood, "ood")?, n, &mut self.stream(ROLE_OOD))
    }

    fn uniform_terms(&self, n: usize, w: f64) -> Vec<Term> {
        (0..n).map(|_| Term::new(LossKind::CeSoft, Target::Dist(self.unif.clone()), w)).collect()
    }

    /// Attacks a concatenated batch: class-labeled rows with the attack loss,
    /// OOD rows toward the uniform label.
    fn attack_mixed(&self, inputs: &[f64], terms: &[Term], attack: &AttackConfig) -> Result<Vec<f64>> {
        let attack_terms_: Vec<Term> = terms
            .iter()
            .map(|t| match t.target {
                Target::Class(_) => Term { kind: attack.loss, ..t.clone() },
                Target::Dist(_) => t.clone(),
            })
            .collect();
        let adv = attack_terms(&self.model, inputs, &attack_terms_, attack, &mut self.stream(ROLE_ATTACK))?;
        debug_assert!(adv.max_abs_delta() <= attack.eps + 1e-9);
        Ok(adv.inputs)
    }

    /// Summed loss and parameter gradient of the given passes.
    pub fn gradient(&self, parts: &[Part]) -> Result<(f64, Vec<f64>)> {
        let mut loss = 0.0;
        let mut grads = vec![0.0; self.model.param_count()];
        for p in parts {
            let g = self.model.weighted_loss_and_grads(&p.inputs, &p.terms, GradMode::Full)?;
            loss += g.loss;
            for (a, b) in grads.iter_mut().zip(&g.param_grads) {
                *a += b;
            }
        }
        Ok((loss, grads))
    }

    /// One SGD update; returns the objective value before the update.
    pub fn step(&mut self) -> Result<f64> {
        let parts = self.step_parts()?;
        let (loss, grads) = self.gradient(&parts)?;
        if !loss.is_finite() {
            return Err(OatError::NonFinite { context: "training loss", index: self.step, value: loss });
        }
        let lr = lr_at(self.cfg.base_lr, self.step.min(self.cfg.total_steps - 1), self.cfg.total_steps);
        self.opt.step(self.model.params_mut(), &grads, lr)?;
        self.step += 1;
        Ok(loss)
    }
}

/// Mixes a target batch with a permuted copy of itself whose first
/// `ood.len()` rows are replaced by OOD samples carrying the uniform label.
/// Coefficients are drawn per pair from Beta(a, a).
pub fn mix_batch(
    target: &Batch,
    labels: &[usize],
    ood: &Batch,
    num_classes: usize,
    mix_a: f64,
    rng: &mut RngState,
) -> Result<(Vec<f64>, Vec<ProbVector>)> {
    let n = target.len();
    if ood.len() > n || labels.len() != n {
        return Err(OatError::invalid("mixup batch sizes do not line up"));
    }
    let d = if n == 0 { 0 } else { target.inputs.len() / n };
    let perm = rng.permutation(n);
    let unif = ProbVector::uniform(num_classes);
    let mut inputs = Vec::with_capacity(n * d);
    let mut soft = Vec::with_capacity(n);
    for i in 0..n {
        let lam = rng.beta_symmetric(mix_a)?;
        let (partner, partner_label) = if i < ood.len() {
            (&ood.inputs[i * d..(i + 1) * d], unif.clone())
        } else {
            let j = perm[i];
            (&target.inputs[j * d..(j + 1) * d], ProbVector::one_hot(num_classes, labels[j]))
        };
        let own = &target.inputs[i * d..(i + 1) * d];
        inputs.extend(own.iter().zip(partner).map(|(a, b)| lam * a + (1.0 - lam) * b));
        soft.push(ProbVector::mix(&ProbVector::one_hot(num_classes, labels[i]), &partner_label, lam)?);
    }
    Ok((inputs, soft))
}

/// Trains `objective` for `cfg.total_steps` steps, evaluating per `plan`.
pub fn train(
    spec: &ModelSpec,
    cfg: &TrainConfig,
    objective: Objective,
    sources: Sources<'_>,
    plan: &EvalPlan<'_>,
    rng: &RngState,
) -> Result<(Model, RunMetrics)> {
    let mut trainer = Trainer::new(spec, cfg, objective, sources, rng)?;
    let metrics = run(&mut trainer, plan)?;
    Ok((trainer.into_model(), metrics))
}

/// Runs the remaining steps of `trainer` and records metrics per `plan`.
pub fn run(trainer: &mut Trainer<'_>, plan: &EvalPlan<'_>) -> Result<RunMetrics> {
    let total = trainer.cfg.total_steps;
    let every = match plan.every {
        0 => trainer.sources.target.len().div_ceil(trainer.split().target).max(1),
        k => k,
    };
    let start = plan.clock.map(|c| c());
    let mut metrics = RunMetrics::new(plan.attacks.iter().map(|a| a.label()).collect());
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    while trainer.step < total {
        let lr = lr_at(trainer.cfg.base_lr, trainer.step, total);
        loss_sum += trainer.step()?;
        loss_n += 1;
        if trainer.step.is_multiple_of(every) || trainer.step == total {
            let eval_rng = trainer.rng.split2(ROLE_EVAL, metrics.records.len() as u64);
            let mut rec = plan.measure(trainer.model(), trainer.sources.target, &eval_rng)?;
            rec.step = trainer.step;
            rec.lr = lr;
            rec.train_loss = loss_sum / loss_n as f64;
            rec.wall_ms = match (plan.clock, start) {
                (Some(c), Some(s)) => c() - s,
                _ => 0.0,
            };
            metrics.push(rec, 2 * trainer.step > total);
            loss_sum = 0.0;
            loss_n = 0;
        }
    }
    Ok(metrics)
}

pub fn train_standard(spec: &ModelSpec, d_t: &Dataset, cfg: &TrainConfig, plan: &EvalPlan<'_>, rng: &RngState) -> Result<(Model, RunMetrics)> {
    train(spec, cfg, Objective::Standard, Sources::target(d_t), plan, rng)
}

pub fn train_pgd_at(
    spec: &ModelSpec,
    d_t: &Dataset,
    cfg: &TrainConfig,
    attack: &AttackConfig,
    plan: &EvalPlan<'_>,
    rng: &RngState,
) -> Result<(Model, RunMetrics)> {
    train(spec, cfg, Objective::PgdAt(*attack), Sources::target(d_t), plan, rng)
}

pub fn train_trades(
    spec: &ModelSpec,
    d_t: &Dataset,
    cfg: &TrainConfig,
    attack: &AttackConfig,
    beta: f64,
    plan: &EvalPlan<'_>,
    rng: &RngState,
) -> Result<(Model, RunMetrics)> {
    train(spec, cfg, Objective::Trades { attack: *attack, beta }, Sources::target(d_t), plan, rng)
}

pub fn train_oat(
    spec: &ModelSpec,
    d_t: &Dataset,
    d_o: &Dataset,
    cfg: &TrainConfig,
    oat: &OatConfig,
    plan: &EvalPlan<'_>,
    rng: &RngState,
) -> Result<(Model, RunMetrics)> {
    train(spec, cfg, Objective::Oat(*oat), Sources::with_ood(d_t, d_o), plan, rng)
}

pub fn train_oat_mixup(
    spec: &ModelSpec,
    d_t: &Dataset,
    d_o: &Dataset,
    cfg: &TrainConfig,
    mcfg: &MixupOatConfig,
    plan: &EvalPlan<'_>,
    rng: &RngState,
) -> Result<(Model, RunMetrics)> {
    train(spec, cfg, Objective::Mixup(*mcfg), Sources::with_ood(d_t, d_o), plan, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn train_oat_uid(
    spec: &ModelSpec,
    d_t: &Dataset,
    d_o: &Dataset,
    d_uid: &Dataset,
    cfg: &TrainConfig,
    ucfg: &UidOatConfig,
    plan: &EvalPlan<'_>,
    rng: &RngState,
) -> Result<(Model, RunMetrics)> {
    let sources = Sources { target: d_t, ood: Some(d_o), uid: Some(d_uid) };
    train(spec, cfg, Objective::OatUid(*ucfg), sources, plan, rng)
}

/// Trains on a random-label copy of `d_t`, either plainly or with OAT-S
/// (alpha 1), and returns the metrics; `train_err` is measured against the
/// random labels.
pub fn randomization_test(
    spec: &ModelSpec,
    d_t: &Dataset,
    d_o: &Dataset,
    cfg: &TrainConfig,
    with_oat: bool,
    plan: &EvalPlan<'_>,
    rng: &RngState,
) -> Result<RunMetrics> {
    let shuffled = random_label_copy(d_t, rng)?;
    let objective = if with_oat { Objective::Oat(OatConfig::standard(1.0)) } else { Objective::Standard };
    let sources = Sources::with_ood(&shuffled, d_o);
    Ok(train(spec, cfg, objective, sources, plan, rng)?.1)
}

/// The random-label copy used by [`randomization_test`] for this `rng`.
pub fn random_label_copy(d_t: &Dataset, rng: &RngState) -> Result<Dataset> {
    randomize_labels(d_t, &mut rng.split(ROLE_RANDOM_LABELS))
}

/// Copy of `d` labeled with the model's predictions.
pub fn pseudo_label(model: &Model, d: &Dataset) -> Result<Dataset> {
    let mut labels = Vec::with_capacity(d.len());
    for start in (0..d.len()).step_by(crate::eval::EVAL_CHUNK) {
        let end = (start + crate::eval::EVAL_CHUNK).min(d.len());
        let pred = model.predict(&gather(d, (start..end).collect()).inputs)?;
        labels.extend(pred.into_iter().map(|p| p as u16));
    }
    let mut out = d.with_labels(labels)?;
    out.name = format!("{}-pseudo", d.name);
    Ok(out)
}
