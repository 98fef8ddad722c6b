//! Gaussian feature models and Monte Carlo checks of the gradient behaviour
//! of a logistic classifier trained on OOD features with target value 1/2.
//!
//! Three data models are provided:
//!
//! * the robust/non-robust input model (`x1 = +-y`, `x_k ~ N(eps*y, 1)`),
//! * target/OOD feature models (`z1 ~ N(y, u^2)` vs `z1 ~ N(0, v^2)`, shared
//!   `z_k ~ N(eta*label, 1)`),
//! * the two-feature desirable/undesirable OOD model used for standard
//!   learning (`z1 ~ N(0, s1^2)`, `z2 ~ N(kappa*q, s2^2)`).
//!
//! OOD labels `q` are wrapped in [`HiddenLabels`]; only verification code that
//! explicitly asks for them can read them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{OatError, Result};
use crate::numerics::{sign, sigmoid, softplus, RngState, RunningMoments};

/// Parameters of the input model with one robust and `d` non-robust features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TsiprasParams {
    /// Probability that the robust feature agrees with the label.
    pub p: f64,
    /// Mean shift of the non-robust features.
    pub eps_mean: f64,
    pub d: usize,
}

impl TsiprasParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.p) {
            return Err(OatError::invalid("p must lie in [0.5, 1]"));
        }
        if !(self.eps_mean >= 0.0) || self.d == 0 {
            return Err(OatError::invalid("eps_mean must be >= 0 and d >= 1"));
        }
        Ok(())
    }
}

/// Target/OOD feature model parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureModelParams {
    /// Std of the robust feature on target data.
    pub u: f64,
    /// Std of the robust feature on OOD data.
    pub v: f64,
    /// Correlation strength of the non-robust features with the label.
    pub eta: f64,
    pub d: usize,
}

impl Default for FeatureModelParams {
    fn default() -> Self {
        FeatureModelParams {
            u: 0.1,
            v: 0.1,
            eta: 1.0,
            d: 64,
        }
    }
}

impl FeatureModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.u >= 0.0 && self.v >= 0.0 && self.eta >= 0.0) || self.d == 0 {
            return Err(OatError::invalid("u, v, eta must be >= 0 and d >= 1"));
        }
        Ok(())
    }
}

/// Desirable (`z1`) / undesirable (`z2`) feature model for OOD data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StdFeatureModelParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub kappa: f64,
    /// Required ratio `sigma2 / sigma1`.
    pub min_ratio: f64,
}

impl Default for StdFeatureModelParams {
    fn default() -> Self {
        StdFeatureModelParams {
            sigma1: 0.1,
            sigma2: 1.0,
            kappa: 1.0,
            min_ratio: 10.0,
        }
    }
}

impl StdFeatureModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 >= 0.0 && self.sigma2 >= 0.0 && self.kappa >= 0.0) {
            return Err(OatError::invalid("sigma1, sigma2, kappa must be >= 0"));
        }
        if self.sigma1 * self.min_ratio > self.sigma2 {
            return Err(OatError::invalid("sigma1 must be at most sigma2 / min_ratio"));
        }
        Ok(())
    }
}

/// Labels of OOD samples. Deliberately has no slice accessor besides
/// [`HiddenLabels::reveal_for_verification`].
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLabels(Vec<i8>);

impl HiddenLabels {
    pub fn reveal_for_verification(&self) -> &[i8] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureLabels {
    Observed(Vec<i8>),
    Hidden(HiddenLabels),
}

/// Row-major feature matrix (`n x dim`) with +-1 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatureBatch {
    features: Vec<f64>,
    dim: usize,
    labels: FeatureLabels,
}

impl LabeledFeatureBatch {
    pub fn new(features: Vec<f64>, dim: usize, labels: FeatureLabels) -> Result<Self> {
        let n = match &labels {
            FeatureLabels::Observed(l) => l.len(),
            FeatureLabels::Hidden(h) => h.0.len(),
        };
        if dim == 0 || features.len() != n * dim {
            return Err(OatError::ShapeMismatch {
                expected: n * dim,
                got: features.len(),
            });
        }
        Ok(LabeledFeatureBatch {
            features,
            dim,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.features.iter().skip(j).step_by(self.dim).copied()
    }

    /// Observed labels; `None` for OOD batches.
    pub fn labels(&self) -> Option<&[i8]> {
        match &self.labels {
            FeatureLabels::Observed(l) => Some(l),
            FeatureLabels::Hidden(_) => None,
        }
    }

    pub fn hidden_labels(&self) -> Option<&HiddenLabels> {
        match &self.labels {
            FeatureLabels::Hidden(h) => Some(h),
            FeatureLabels::Observed(_) => None,
        }
    }
}

pub fn sample_tsipras(params: &TsiprasParams, n: usize, rng: &mut RngState) -> Result<LabeledFeatureBatch> {
    params.validate()?;
    if n == 0 {
        return Err(OatError::invalid("n must be >= 1"));
    }
    let dim = params.d + 1;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.rademacher();
        let x1 = if rng.bernoulli(params.p) { y } else { -y };
        features.push(x1);
        for _ in 0..params.d {
            features.push(params.eps_mean * y + rng.normal());
        }
        labels.push(y as i8);
    }
    LabeledFeatureBatch::new(features, dim, FeatureLabels::Observed(labels))
}

fn sample_shared_model(
    n: usize,
    d: usize,
    robust: impl Fn(f64, &mut RngState) -> f64,
    eta: f64,
    rng: &mut RngState,
) -> (Vec<f64>, Vec<i8>) {
    let dim = d + 1;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.rademacher();
        features.push(robust(label, rng));
        for _ in 0..d {
            features.push(eta * label + rng.normal());
        }
        labels.push(label as i8);
    }
    (features, labels)
}

/// Target features: `z1 ~ N(y, u^2)`, `z_k ~ N(eta*y, 1)`.
pub fn sample_target_features(
    params: &FeatureModelParams,
    n: usize,
    rng: &mut RngState,
) -> Result<LabeledFeatureBatch> {
    params.validate()?;
    let u = params.u;
    let (f, l) = sample_shared_model(n, params.d, |y, r| y + u * r.normal(), params.eta, rng);
    LabeledFeatureBatch::new(f, params.d + 1, FeatureLabels::Observed(l))
}

/// OOD features: `z1 ~ N(0, v^2)`, `z_k ~ N(eta*q, 1)` with hidden `q`.
pub fn sample_ood_features(
    params: &FeatureModelParams,
    n: usize,
    rng: &mut RngState,
) -> Result<LabeledFeatureBatch> {
    params.validate()?;
    let v = params.v;
    let (f, l) = sample_shared_model(n, params.d, |_, r| v * r.normal(), params.eta, rng);
    LabeledFeatureBatch::new(f, params.d + 1, FeatureLabels::Hidden(HiddenLabels(l)))
}

/// Two-feature OOD model: `z1 ~ N(0, s1^2)`, `z2 ~ N(kappa*q, s2^2)`.
pub fn sample_std_ood_features(
    params: &StdFeatureModelParams,
    n: usize,
    rng: &mut RngState,
) -> Result<LabeledFeatureBatch> {
    params.validate()?;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let q = rng.rademacher();
        features.push(params.sigma1 * rng.normal());
        features.push(params.kappa * q + params.sigma2 * rng.normal());
        labels.push(q as i8);
    }
    LabeledFeatureBatch::new(features, 2, FeatureLabels::Hidden(HiddenLabels(labels)))
}

/// Averaging classifier: sign of the mean of coordinates 2..d+1, ties to +1.
pub fn f_avg_predict(z: &[f64], d: usize) -> Result<i8> {
    if z.len() != d + 1 {
        return Err(OatError::ShapeMismatch {
            expected: d + 1,
            got: z.len(),
        });
    }
    let s: f64 = z[1..].iter().sum();
    Ok(if s >= 0.0 { 1 } else { -1 })
}

/// Logistic model `p(y = +1 | z) = sigmoid(w . z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    pub w: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|x| !x.is_finite()) {
            return Err(OatError::invalid("classifier weights must be finite and non-empty"));
        }
        Ok(LinearClassifier { w })
    }

    /// `[0, 1/d, ..., 1/d]`.
    pub fn w_unif(d: usize) -> Self {
        let mut w = vec![1.0 / d as f64; d + 1];
        w[0] = 0.0;
        LinearClassifier { w }
    }

    /// `[w1, 1/d, ..., 1/d]`.
    pub fn with_robust_weight(d: usize, w1: f64) -> Self {
        let mut c = Self::w_unif(d);
        c.w[0] = w1;
        c
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn logit(&self, z: &[f64]) -> f64 {
        self.w.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    /// Cross-entropy with target value `t`, from the logit.
    pub fn loss(&self, z: &[f64], t: f64) -> f64 {
        let s = self.logit(z);
        t * softplus(-s) + (1.0 - t) * softplus(s)
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.w.len() {
            return Err(OatError::ShapeMismatch {
                expected: self.w.len(),
                got: z.len(),
            });
        }
        Ok(())
    }
}

/// dL/dw = (sigmoid(w . z) - t) z.
pub fn logistic_grad_w(z: &[f64], t: f64, clf: &LinearClassifier) -> Result<Vec<f64>> {
    clf.check_dim(z)?;
    let r = sigmoid(clf.logit(z)) - t;
    Ok(z.iter().map(|zi| r * zi).collect())
}

/// dL/dz = (sigmoid(w . z) - t) w.
pub fn logistic_grad_z(z: &[f64], t: f64, clf: &LinearClassifier) -> Result<Vec<f64>> {
    clf.check_dim(z)?;
    let r = sigmoid(clf.logit(z)) - t;
    Ok(clf.w.iter().map(|wi| r * wi).collect())
}

/// Feature-space budget and target value for the sign adversary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureAttackConfig {
    pub lambda: f64,
    pub t: f64,
}

impl FeatureAttackConfig {
    pub fn new(lambda: f64, t: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(0.0..=1.0).contains(&t) {
            return Err(OatError::invalid("lambda must be >= 0 and t in [0, 1]"));
        }
        Ok(FeatureAttackConfig { lambda, t })
    }
}

/// `z + lambda * sign(dL/dz)` with sign(0) = 0, so coordinates with zero
/// weight never move.
pub fn feature_adversary(z: &[f64], clf: &LinearClassifier, cfg: &FeatureAttackConfig) -> Result<Vec<f64>> {
    clf.check_dim(z)?;
    let r = sigmoid(clf.logit(z)) - cfg.t;
    Ok(z.iter()
        .zip(&clf.w)
        .map(|(zi, wi)| zi + cfg.lambda * sign(r * wi))
        .collect())
}

/// Which result to verify.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TheoremId {
    /// Shift of adversarial OOD features.
    T1,
    /// Expected gradient with zero robust weight.
    T2,
    /// Expected gradient with positive robust weight.
    T3,
    /// Desirable-feature gradient under standard learning.
    B4,
    /// Undesirable-feature gradient sign under standard learning.
    B5,
}

impl TheoremId {
    pub const ALL: [TheoremId; 5] = [TheoremId::T1, TheoremId::T2, TheoremId::T3, TheoremId::B4, TheoremId::B5];

    pub fn name(&self) -> &'static str {
        match self {
            TheoremId::T1 => "T1",
            TheoremId::T2 => "T2",
            TheoremId::T3 => "T3",
            TheoremId::B4 => "B4",
            TheoremId::B5 => "B5",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TheoremId::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| OatError::invalid("unknown theorem id"))
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All knobs of the Monte Carlo verifier.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifySetup {
    pub features: FeatureModelParams,
    pub std_features: StdFeatureModelParams,
    /// Feature-space budget.
    pub lambda: f64,
    /// Robust weight for T3; `None` means `1/d`.
    pub t3_w1: Option<f64>,
    /// Weak desirable weight for B4/B5.
    pub w1_small: f64,
    /// |w2| for B4/B5 (B5 is checked for both signs).
    pub w2: f64,
    /// Minimum P(|w . z_adv| > 3) for T2/T3.
    pub saturation_guard: f64,
    /// Maximum E|w1 z1| / E|w2 z2| for B4/B5.
    pub weak_dependence_guard: f64,
    pub rel_tol: f64,
    pub t1_rel_tol: f64,
    pub se_multiplier: f64,
}

impl Default for VerifySetup {
    fn default() -> Self {
        VerifySetup {
            features: FeatureModelParams::default(),
            std_features: StdFeatureModelParams::default(),
            lambda: 0.5,
            t3_w1: None,
            w1_small: 0.01,
            w2: 0.5,
            saturation_guard: 0.99,
            weak_dependence_guard: 0.01,
            rel_tol: 0.05,
            t1_rel_tol: 0.02,
            se_multiplier: 3.0,
        }
    }
}

pub const MIN_VERIFY_SAMPLES: usize = 10_000;
const SATURATION_LOGIT: f64 = 3.0;

/// How a [`CoordinateCheck`] decides pass/fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckRule {
    /// Every sample must have exactly the target value.
    Exact,
    /// `|estimate - target| <= tolerance`.
    Within,
    /// `sign(target) * estimate > tolerance` (tolerance = k standard errors).
    SignAbove,
}

impl CheckRule {
    pub fn name(&self) -> &'static str {
        match self {
            CheckRule::Exact => "exact",
            CheckRule::Within => "within",
            CheckRule::SignAbove => "sign",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(CheckRule::Exact),
            "within" => Some(CheckRule::Within),
            "sign" => Some(CheckRule::SignAbove),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateCheck {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub se: f64,
    pub tolerance: f64,
    pub rule: CheckRule,
    pub pass: bool,
}

impl CoordinateCheck {
    fn within(name: &str, m: &RunningMoments, target: f64, tolerance: f64) -> Self {
        let estimate = m.mean();
        CoordinateCheck {
            name: name.into(),
            estimate,
            target,
            se: m.std_error(),
            tolerance,
            rule: CheckRule::Within,
            pass: (estimate - target).abs() <= tolerance,
        }
    }

    fn sign_above(name: &str, m: &RunningMoments, target_sign: f64, k: f64) -> Self {
        let estimate = m.mean();
        let tolerance = k * m.std_error();
        CoordinateCheck {
            name: name.into(),
            estimate,
            target: target_sign,
            se: m.std_error(),
            tolerance,
            rule: CheckRule::SignAbove,
            pass: target_sign * estimate > tolerance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyStatus {
    Pass,
    ToleranceFail,
    /// The closed form relies on an approximation whose precondition did not hold.
    RegimeNotMet,
}

impl VerifyStatus {
    pub fn name(&self) -> &'static str {
        match self {
            VerifyStatus::Pass => "pass",
            VerifyStatus::ToleranceFail => "tolerance-fail",
            VerifyStatus::RegimeNotMet => "approximation regime not met",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [VerifyStatus::Pass, VerifyStatus::ToleranceFail, VerifyStatus::RegimeNotMet]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub id: TheoremId,
    pub n_samples: usize,
    pub checks: Vec<CoordinateCheck>,
    /// Name and value of the regime diagnostic, when the result has one.
    pub regime: Option<(String, f64, f64)>,
    pub status: VerifyStatus,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.status == VerifyStatus::Pass
    }

    pub fn check(&self, name: &str) -> Option<&CoordinateCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn finish(id: TheoremId, n_samples: usize, checks: Vec<CoordinateCheck>, regime: Option<(String, f64, f64)>, regime_ok: bool) -> Self {
        let status = if !regime_ok {
            VerifyStatus::RegimeNotMet
        } else if checks.iter().all(|c| c.pass) {
            VerifyStatus::Pass
        } else {
            VerifyStatus::ToleranceFail
        };
        VerificationReport {
            id,
            n_samples,
            checks,
            regime,
            status,
        }
    }
}

/// Monte Carlo check of one result against its closed form.
pub fn verify_theorem(id: TheoremId, setup: &VerifySetup, n_samples: usize, rng: &mut RngState) -> Result<VerificationReport> {
    if n_samples < MIN_VERIFY_SAMPLES {
        return Err(OatError::InsufficientSamples {
            needed: MIN_VERIFY_SAMPLES,
            got: n_samples,
        });
    }
    if !(setup.lambda >= 0.0) {
        return Err(OatError::invalid("lambda must be >= 0"));
    }
    match id {
        TheoremId::T1 => verify_feature_shift(setup, n_samples, rng),
        TheoremId::T2 => {
            let clf = LinearClassifier::w_unif(setup.features.d);
            verify_ood_gradient(TheoremId::T2, setup, &clf, 0.0, n_samples, rng)
        }
        TheoremId::T3 => {
            let d = setup.features.d;
            let w1 = setup.t3_w1.unwrap_or(1.0 / d as f64);
            if !(w1 > 0.0) {
                return Err(OatError::invalid("T3 needs a positive robust weight"));
            }
            let clf = LinearClassifier::with_robust_weight(d, w1);
            verify_ood_gradient(TheoremId::T3, setup, &clf, 0.5 * setup.lambda, n_samples, rng)
        }
        TheoremId::B4 | TheoremId::B5 => verify_standard_learning(id, setup, n_samples, rng),
    }
}

fn verify_feature_shift(setup: &VerifySetup, n: usize, rng: &mut RngState) -> Result<VerificationReport> {
    let d = setup.features.d;
    let clf = LinearClassifier::w_unif(d);
    let cfg = FeatureAttackConfig::new(setup.lambda, 0.5)?;
    let batch = sample_ood_features(&setup.features, n, rng)?;
    let q = batch.hidden_labels().expect("OOD batch").reveal_for_verification();

    let mut robust = RunningMoments::new();
    let mut robust_max_abs: f64 = 0.0;
    let mut shift = RunningMoments::new();
    for i in 0..n {
        let z = batch.row(i);
        let adv = feature_adversary(z, &clf, &cfg)?;
        let d1 = adv[0] - z[0];
        robust.push(d1);
        robust_max_abs = robust_max_abs.max(d1.abs());
        let qi = q[i] as f64;
        let s: f64 = adv[1..].iter().zip(&z[1..]).map(|(a, b)| (a - b) * qi).sum();
        shift.push(s / d as f64);
    }
    let target = setup.lambda;
    let exact = CoordinateCheck {
        name: "z1_shift".into(),
        estimate: robust.mean(),
        target: 0.0,
        se: robust.std_error(),
        tolerance: 0.0,
        rule: CheckRule::Exact,
        pass: robust_max_abs == 0.0,
    };
    let tol = (setup.t1_rel_tol * target.abs()).max(setup.se_multiplier * shift.std_error());
    let shift_check = CoordinateCheck::within("zk_shift_times_q", &shift, target, tol);
    Ok(VerificationReport::finish(TheoremId::T1, n, vec![exact, shift_check], None, true))
}

fn verify_ood_gradient(
    id: TheoremId,
    setup: &VerifySetup,
    clf: &LinearClassifier,
    w1_target: f64,
    n: usize,
    rng: &mut RngState,
) -> Result<VerificationReport> {
    let d = setup.features.d;
    let cfg = FeatureAttackConfig::new(setup.lambda, 0.5)?;
    let batch = sample_ood_features(&setup.features, n, rng)?;

    let mut g1 = RunningMoments::new();
    let mut gk = RunningMoments::new();
    let mut saturated = 0usize;
    for i in 0..n {
        let adv = feature_adversary(batch.row(i), clf, &cfg)?;
        if clf.logit(&adv).abs() > SATURATION_LOGIT {
            saturated += 1;
        }
        let g = logistic_grad_w(&adv, 0.5, clf)?;
        g1.push(g[0]);
        gk.push(g[1..].iter().sum::<f64>() / d as f64);
    }
    let saturation = saturated as f64 / n as f64;
    let k = setup.se_multiplier;
    let w1_check = if w1_target == 0.0 {
        CoordinateCheck::within("grad_w1", &g1, 0.0, k * g1.std_error())
    } else {
        CoordinateCheck::within("grad_w1", &g1, w1_target, setup.rel_tol * w1_target.abs())
    };
    let wk_target = 0.5 * (setup.features.eta + setup.lambda);
    let wk_check = CoordinateCheck::within("grad_wk", &gk, wk_target, setup.rel_tol * wk_target.abs());
    Ok(VerificationReport::finish(
        id,
        n,
        vec![w1_check, wk_check],
        Some(("saturation".into(), saturation, setup.saturation_guard)),
        saturation >= setup.saturation_guard,
    ))
}

fn verify_standard_learning(id: TheoremId, setup: &VerifySetup, n: usize, rng: &mut RngState) -> Result<VerificationReport> {
    let params = &setup.std_features;
    let k = setup.se_multiplier;
    let batch = sample_std_ood_features(params, n, rng)?;

    let signs: &[f64] = if id == TheoremId::B4 { &[1.0] } else { &[1.0, -1.0] };
    let mut checks = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for &s in signs {
        let clf = LinearClassifier::new(vec![setup.w1_small, s * setup.w2])?;
        let mut g1 = RunningMoments::new();
        let mut g2 = RunningMoments::new();
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        for i in 0..n {
            let z = batch.row(i);
            c1 += (clf.w[0] * z[0]).abs();
            c2 += (clf.w[1] * z[1]).abs();
            let g = logistic_grad_w(z, 0.5, &clf)?;
            g1.push(g[0]);
            g2.push(g[1]);
        }
        worst_ratio = worst_ratio.max(if c2 > 0.0 { c1 / c2 } else { f64::INFINITY });
        if id == TheoremId::B4 {
            checks.push(CoordinateCheck::within("grad_w1", &g1, 0.0, k * g1.std_error()));
        } else {
            let name = if s > 0.0 { "grad_w2_pos" } else { "grad_w2_neg" };
            checks.push(CoordinateCheck::sign_above(name, &g2, s, k));
        }
    }
    Ok(VerificationReport::finish(
        id,
        n,
        checks,
        Some(("weak_dependence_ratio".into(), worst_ratio, setup.weak_dependence_guard)),
        worst_ratio < setup.weak_dependence_guard,
    ))
}

/// Source of labelled features for [`expected_losses`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeatureSampler {
    Tsipras(TsiprasParams),
    Target(FeatureModelParams),
}

impl FeatureSampler {
    pub fn sample(&self, n: usize, rng: &mut RngState) -> Result<LabeledFeatureBatch> {
        match self {
            FeatureSampler::Tsipras(p) => sample_tsipras(p, n, rng),
            FeatureSampler::Target(p) => sample_target_features(p, n, rng),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedLosses {
    pub beta_s: f64,
    pub beta_a: f64,
    pub se_s: f64,
    pub se_a: f64,
}

/// Target value of a +-1 label.
#[inline]
pub fn label_target(y: i8) -> f64 {
    if y > 0 {
        1.0
    } else {
        0.0
    }
}

/// Monte Carlo estimates of the expected standard and adversarial losses of
/// `clf`, with the adversary pushing each sample away from its own label.
pub fn expected_losses(
    clf: &LinearClassifier,
    sampler: &FeatureSampler,
    lambda: f64,
    n_samples: usize,
    rng: &mut RngState,
) -> Result<ExpectedLosses> {
    if n_samples == 0 {
        return Err(OatError::invalid("n_samples must be >= 1"));
    }
    let batch = sampler.sample(n_samples, rng)?;
    let labels = batch.labels().expect("labelled sampler");
    let mut s = RunningMoments::new();
    let mut a = RunningMoments::new();
    for (i, &y) in labels.iter().enumerate() {
        let z = batch.row(i);
        let t = label_target(y);
        s.push(clf.loss(z, t));
        let adv = feature_adversary(z, clf, &FeatureAttackConfig::new(lambda, t)?)?;
        a.push(clf.loss(&adv, t));
    }
    Ok(ExpectedLosses {
        beta_s: s.mean(),
        beta_a: a.mean(),
        se_s: s.std_error(),
        se_a: a.std_error(),
    })
}

/// Accuracy of the averaging classifier on the robust/non-robust input
/// model, clean and under the sign adversary with budget `lambda` (aimed
/// against `w_unif`).
pub fn f_avg_accuracy(params: &TsiprasParams, lambda: f64, n: usize, rng: &mut RngState) -> Result<(f64, f64)> {
    let batch = sample_tsipras(params, n, rng)?;
    let labels = batch.labels().expect("labelled");
    let clf = LinearClassifier::w_unif(params.d);
    let mut clean = 0usize;
    let mut adv = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let z = batch.row(i);
        if f_avg_predict(z, params.d)? == y {
            clean += 1;
        }
        let zbar = feature_adversary(z, &clf, &FeatureAttackConfig::new(lambda, label_target(y))?)?;
        if f_avg_predict(&zbar, params.d)? == y {
            adv += 1;
        }
    }
    Ok((clean as f64 / n as f64, adv as f64 / n as f64))
}
