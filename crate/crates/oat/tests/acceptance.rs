//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion to
//! stderr (uncaptured), then fails if any criterion failed.
//!
//! `OAT_ACCEPTANCE=1,2,12` restricts the run to the listed criteria.

use std::fs;
use std::io::Write;
use std::time::Instant;

use oat::commands::train_cmd;
use oat::ExperimentConfig;
use oat_core::attacks::{pgd_linf, AttackConfig, EPS_8};
use oat_core::data::{gen_synthetic, Dataset, SynthSets, SynthSpec};
use oat_core::eval::{accuracy, robust_accuracy};
use oat_core::nn::{build_model, CnnSpec, GradMode, InputShape, LossKind, Model, ModelSpec, Target, Term, TrainConfig};
use oat_core::numerics::sign;
use oat_core::synthetic::{f_avg_accuracy, verify_theorem, TheoremId, TsiprasParams, VerifySetup, VerifyStatus};
use oat_core::training::{random_label_copy, train, EvalPlan, MixupOatConfig, OatConfig, Objective, Sources, Trainer};
use oat_core::{ProbVector, RngState};

type Outcome = (bool, String);

// Desk-scale protocol.
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const DESK_LR: f64 = 0.02;
const DESK_STEPS: usize = 600;
const TRAIN_PGD_STEPS: usize = 5;
const SMALL_N: usize = 500;
const RANDTEST_N: usize = 500;
const RANDTEST_STEPS: usize = 2500;

// Tolerances.
const ROBUST_STANDARD_MAX: f64 = 0.05;
const PGD_GAIN_MIN: f64 = 0.20;
const OAT_GAIN_MIN: f64 = 0.02;
const CLEAN_GAP_MAX: f64 = 0.03;
const SMALL_N_GAIN_MIN: f64 = 0.02;
const FULL_N_LOSS_MAX: f64 = 0.01;
const MEMORIZE_ERR_MAX: f64 = 0.05;
const OAT_RANDOM_ERR_MIN: f64 = 0.40;
const FD_REL_TOL: f64 = 1e-5;
const WEIGHTING_TOL: f64 = 1e-9;

fn line(id: u8, name: &str, pass: bool, secs: f64, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id:>2} {verdict} [{secs:7.1}s] {name}: {detail}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_all(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn theorem(id: TheoremId, setup: &VerifySetup, seed: u64) -> (bool, String, VerifyStatus) {
    let r = verify_theorem(id, setup, 100_000, &mut RngState::from_seed(seed)).expect("verifier runs");
    let checks: Vec<String> = r.checks.iter().map(|c| format!("{}={:.5} (target {:.5}, tol {:.2e})", c.name, c.estimate, c.target, c.tolerance)).collect();
    let regime = r.regime.as_ref().map(|(n, v, b)| format!("; {n}={v:.3} (guard {b})")).unwrap_or_default();
    (r.passed(), format!("{}; {}{regime}", r.status.name(), checks.join(", ")), r.status)
}

fn c1() -> Outcome {
    let t0 = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, lambda) in [0.0, 0.5, 2.0].into_iter().enumerate() {
        let setup = VerifySetup { lambda, ..VerifySetup::default() };
        let (pass, detail, _) = theorem(TheoremId::T1, &setup, 100 + k as u64);
        ok &= pass;
        parts.push(format!("lambda={lambda}: {detail}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    (ok && secs < 10.0, format!("{} | {secs:.1}s of 10s", parts.join(" | ")))
}

fn c2() -> Outcome {
    let t0 = Instant::now();
    let (pass, detail, _) = theorem(TheoremId::T2, &VerifySetup::default(), 200);
    let secs = t0.elapsed().as_secs_f64();
    (pass && secs < 30.0, format!("{detail} | {secs:.1}s of 30s"))
}

fn c3() -> Outcome {
    let (pass, detail, _) = theorem(TheoremId::T3, &VerifySetup::default(), 300);
    (pass, detail)
}

fn c4() -> Outcome {
    let (p4, d4, _) = theorem(TheoremId::B4, &VerifySetup::default(), 400);
    let (p5, d5, _) = theorem(TheoremId::B5, &VerifySetup::default(), 401);
    (p4 && p5, format!("B4 {d4} | B5 {d5}"))
}

fn c5() -> Outcome {
    let d = 100;
    let p = TsiprasParams { p: 0.9, eps_mean: 2.0 / (d as f64).sqrt(), d };
    let (clean, adv) = f_avg_accuracy(&p, 2.0 * p.eps_mean, 100_000, &mut RngState::from_seed(500)).unwrap();
    (clean > 0.97 && adv < 0.10, format!("clean {clean:.4} (> 0.97), adversarial {adv:.4} (< 0.10)"))
}

fn fd_draw(seed: u64) -> f64 {
    let mut rng = RngState::from_seed(seed);
    let c = 2 + rng.index(3);
    let spec = match rng.index(3) {
        0 => ModelSpec::logistic(InputShape::flat(5), c),
        1 => ModelSpec::mlp(InputShape::flat(6), vec![7, 5], c),
        _ => ModelSpec::cnn_small(InputShape::image(2, 4, 4), CnnSpec { conv1: 3, conv2: 2, kernel: 3, fc: 6 }, c),
    };
    let kind = [LossKind::CeHard, LossKind::CeSoft, LossKind::Kl, LossKind::CwMargin { kappa: 0.5 }][rng.index(4)];
    let mut m = build_model(&spec, &mut rng).unwrap();
    for p in m.params_mut() {
        *p += 0.05 * rng.normal();
    }
    let n = 3;
    let x: Vec<f64> = (0..n * spec.input.len()).map(|_| rng.uniform()).collect();
    let terms: Vec<Term> = (0..n)
        .map(|_| {
            let target = match kind {
                LossKind::CeHard | LossKind::CwMargin { .. } => Target::Class(rng.index(c)),
                _ => {
                    let w: Vec<f64> = (0..c).map(|_| 0.05 + rng.uniform()).collect();
                    let s: f64 = w.iter().sum();
                    Target::Dist(ProbVector::new(w.iter().map(|v| v / s).collect()).unwrap())
                }
            };
            Term::new(kind, target, 0.5 + rng.uniform())
        })
        .collect();
    let loss = |m: &Model, x: &[f64]| m.weighted_loss_and_grads(x, &terms, GradMode::InputOnly).unwrap().loss;
    let g = m.weighted_loss_and_grads(&x, &terms, GradMode::Full).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..m.param_count() {
        let orig = m.params()[i];
        m.params_mut()[i] = orig + h;
        let up = loss(&m, &x);
        m.params_mut()[i] = orig - h;
        let down = loss(&m, &x);
        m.params_mut()[i] = orig;
        worst = worst.max(rel(g.param_grads[i], (up - down) / (2.0 * h)));
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let up = loss(&m, &xp);
        xp[i] -= 2.0 * h;
        let down = loss(&m, &xp);
        worst = worst.max(rel(g.input_grads[i], (up - down) / (2.0 * h)));
    }
    worst
}

fn c6() -> Outcome {
    let t0 = Instant::now();
    let draws = 120;
    let errs: Vec<f64> = (0..draws).map(|s| fd_draw(600 + s)).collect();
    let worst = errs.iter().fold(0.0f64, |a, &b| a.max(b));
    let bad = errs.iter().filter(|&&e| e >= FD_REL_TOL).count();
    let secs = t0.elapsed().as_secs_f64();
    (bad == 0 && secs < 120.0, format!("{draws} draws, {bad} over {FD_REL_TOL:e}, worst relative error {worst:.2e} | {secs:.1}s of 120s"))
}

fn c7() -> Outcome {
    let mut rng = RngState::from_seed(700);
    let mlp = build_model(&ModelSpec::mlp(InputShape::flat(8), vec![10], 3), &mut rng).unwrap();
    let lin = build_model(&ModelSpec::logistic(InputShape::flat(8), 3), &mut rng).unwrap();
    let (mut budget, mut clip, mut monotone, mut fgsm, mut identity) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let calls = 10_000;
    for call in 0..calls {
        let n = 1 + rng.index(4);
        let x: Vec<f64> = (0..n * 8).map(|_| if rng.bernoulli(0.2) { rng.index(2) as f64 } else { rng.uniform() }).collect();
        let targets: Vec<Target> = (0..n).map(|_| Target::Class(rng.index(3))).collect();
        let mut arng = rng.split(call as u64);
        match call % 4 {
            0 => {
                let eps = 0.2 * rng.uniform();
                let adv = pgd_linf(&lin, &x, &targets, &AttackConfig::fgsm(eps), &mut arng).unwrap();
                let g = lin.loss_and_grads(&x, &targets, LossKind::CeHard).unwrap().input_grads;
                let expected: Vec<f64> = x.iter().zip(&g).map(|(a, gi)| (a + eps * sign(*gi)).clamp(0.0, 1.0)).collect();
                fgsm += usize::from(adv.inputs != expected);
            }
            1 => {
                let cfg = AttackConfig::pgd(1 + rng.index(4)).with_eps(0.0);
                let adv = pgd_linf(&mlp, &x, &targets, &cfg, &mut arng).unwrap();
                identity += usize::from(adv.inputs != x);
            }
            _ => {
                let eps = 0.3 * rng.uniform();
                let base = if rng.bernoulli(0.5) { AttackConfig::cw(1 + rng.index(5)) } else { AttackConfig::pgd(1 + rng.index(5)) };
                let mut cfg = AttackConfig { eps, step_size: (eps * (0.1 + rng.uniform())).max(1e-4), random_start: rng.bernoulli(0.5), ..base };
                if cfg.validate().is_err() {
                    cfg.random_start = true;
                }
                let adv = pgd_linf(&mlp, &x, &targets, &cfg, &mut arng).unwrap();
                budget += usize::from(adv.max_abs_delta() > eps + 1e-9);
                clip += usize::from(adv.inputs.iter().any(|v| !(0.0..=1.0).contains(v)));
                monotone += usize::from(adv.trace.windows(2).any(|w| w[1] < w[0]));
            }
        }
    }
    let ok = budget + clip + monotone + fgsm + identity == 0;
    (ok, format!("{calls} calls: {budget} budget, {clip} clip, {monotone} monotonicity, {fgsm} FGSM, {identity} eps=0 violations"))
}

fn c8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    for s in [
        "mode=oat-a",
        "attack=pgd",
        "attack.steps=3",
        "train.lr=0.02",
        "train.steps=60",
        "eval.every=20",
        "eval.n=128",
        "eval.attacks=PGD20,CW20",
        "synth.n_train=500",
        "synth.n_test=200",
        "synth.n_ood=500",
        "seed=8",
    ] {
        cfg.set(s).unwrap();
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_cmd(&cfg, &a).unwrap();
    train_cmd(&cfg, &b).unwrap();
    let mut same = Vec::new();
    let mut ok = true;
    for f in ["metrics.csv", "model.oatm"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        ok &= x == y;
        same.push(format!("{f} {} bytes {}", x.len(), if x == y { "identical" } else { "DIFFER" }));
    }
    (ok, same.join(", "))
}

fn c12() -> Outcome {
    let spec = SynthSpec { n_train: 200, n_test: 10, n_ood: 200, ..SynthSpec::default() };
    let sets = gen_synthetic(&spec, &RngState::from_seed(12)).unwrap();
    let ms = ModelSpec::cnn_small(sets.train.shape(), CnnSpec::default(), 4);
    let tc = TrainConfig { base_lr: 0.05, total_steps: 10, batch_size: 32, momentum: 0.9, weight_decay: 0.0, seed: 0 };
    let attack = AttackConfig::pgd(3);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for (alpha, obj) in [(1.0, OatConfig::adversarial(1.0, attack)), (0.4, OatConfig::adversarial(0.4, attack)), (1.0, OatConfig::standard(1.0))] {
        let mut tr = Trainer::new(&ms, &tc, Objective::Oat(obj), Sources::with_ood(&sets.train, &sets.ood), &RngState::from_seed(120)).unwrap();
        let parts = tr.step_parts().unwrap();
        let part = &parts[0];
        let d = tr.model().input_len();
        let nt = part.terms.iter().filter(|t| matches!(t.target, Target::Class(_))).count();
        let labels: Vec<Target> = part.terms[..nt].iter().map(|t| t.target.clone()).collect();
        let unif: Vec<Target> = (nt..part.terms.len()).map(|_| Target::Dist(ProbVector::uniform(4))).collect();
        let gt = tr.model().loss_and_grads(&part.inputs[..nt * d], &labels, LossKind::CeHard).unwrap().param_grads;
        let go = tr.model().loss_and_grads(&part.inputs[nt * d..], &unif, LossKind::CeSoft).unwrap().param_grads;
        let before = tr.model().params().to_vec();
        tr.step().unwrap();
        for (i, (&b, &a)) in before.iter().zip(tr.model().params()).enumerate() {
            let expected = -tc.base_lr * (0.5 * gt[i] + 0.5 * alpha * go[i]);
            worst = worst.max(((a - b) - expected).abs());
            scale = scale.max(expected.abs());
        }
    }
    (worst <= WEIGHTING_TOL, format!("max |delta - oracle| = {worst:.2e} (largest update {scale:.2e}) over OAT-A alpha 1, 0.4 and OAT-S"))
}

fn desk_sets(seed: u64, n_train: usize) -> SynthSets {
    gen_synthetic(&SynthSpec { n_train, ..SynthSpec::default() }, &RngState::from_seed(seed)).unwrap()
}

fn desk_cfg(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig { base_lr: DESK_LR, total_steps: steps, batch_size: 64, seed, ..TrainConfig::default() }
}

fn train_attack() -> AttackConfig {
    AttackConfig { step_size: 2.5 * EPS_8 / TRAIN_PGD_STEPS as f64, ..AttackConfig::pgd(TRAIN_PGD_STEPS) }
}

fn desk_train(target: &Dataset, ood: &Dataset, objective: Objective, steps: usize, seed: u64) -> Model {
    let spec = ModelSpec::cnn_small(target.shape(), CnnSpec::default(), target.num_classes());
    let plan = EvalPlan::final_only(steps);
    train(&spec, &desk_cfg(steps, seed), objective, Sources::with_ood(target, ood), &plan, &RngState::from_seed(1000 + seed)).unwrap().0
}

fn c9() -> Outcome {
    let (mut std_rob, mut pgd_rob, mut oat_rob, mut pgd_clean, mut oat_clean) = (vec![], vec![], vec![], vec![], vec![]);
    for s in SEEDS {
        let sets = desk_sets(s, SynthSpec::default().n_train);
        let eval = |m: &Model| (accuracy(m, &sets.test).unwrap(), robust_accuracy(m, &sets.test, &AttackConfig::pgd(20), &RngState::from_seed(90 + s)).unwrap());
        let standard = desk_train(&sets.train, &sets.ood, Objective::Standard, DESK_STEPS, s);
        std_rob.push(eval(&standard).1);
        let pgd = desk_train(&sets.train, &sets.ood, Objective::PgdAt(train_attack()), DESK_STEPS, s);
        let (c, r) = eval(&pgd);
        pgd_clean.push(c);
        pgd_rob.push(r);
        let oat = desk_train(&sets.train, &sets.ood, Objective::Oat(OatConfig::adversarial(1.0, train_attack())), DESK_STEPS, s);
        let (c, r) = eval(&oat);
        oat_clean.push(c);
        oat_rob.push(r);
    }
    let (sr, pr, or) = (mean(&std_rob), mean(&pgd_rob), mean(&oat_rob));
    let (pc, oc) = (mean(&pgd_clean), mean(&oat_clean));
    let ok = sr < ROBUST_STANDARD_MAX && pr >= sr + PGD_GAIN_MIN && or >= pr + OAT_GAIN_MIN && (oc - pc).abs() <= CLEAN_GAP_MAX;
    (
        ok,
        format!(
            "PGD20 robust: standard {sr:.3} [{}], PGD-AT {pr:.3} [{}], OAT-A {or:.3} [{}]; clean PGD-AT {pc:.3}, OAT-A {oc:.3}",
            fmt_all(&std_rob),
            fmt_all(&pgd_rob),
            fmt_all(&oat_rob)
        ),
    )
}

fn c10() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (n, check_gain) in [(SMALL_N, true), (SynthSpec::default().n_train, false)] {
        let (mut st, mut oa) = (vec![], vec![]);
        for s in SEEDS {
            let sets = desk_sets(s, n);
            st.push(accuracy(&desk_train(&sets.train, &sets.ood, Objective::Standard, DESK_STEPS, s), &sets.test).unwrap());
            oa.push(accuracy(&desk_train(&sets.train, &sets.ood, Objective::Oat(OatConfig::standard(1.0)), DESK_STEPS, s), &sets.test).unwrap());
        }
        let (ms, mo) = (mean(&st), mean(&oa));
        ok &= if check_gain { mo >= ms + SMALL_N_GAIN_MIN } else { mo >= ms - FULL_N_LOSS_MAX };
        parts.push(format!("n={n}: standard {ms:.3} [{}], OAT-S {mo:.3} [{}]", fmt_all(&st), fmt_all(&oa)));
    }
    (ok, parts.join(" | "))
}

fn c11() -> Outcome {
    let sets = desk_sets(11, RANDTEST_N);
    let rng = RngState::from_seed(1100);
    let shuffled = random_label_copy(&sets.train, &rng).unwrap();
    let spec = ModelSpec::cnn_small(shuffled.shape(), CnnSpec::default(), 4);
    let cfg = desk_cfg(RANDTEST_STEPS, 11);
    let plan = EvalPlan::final_only(RANDTEST_STEPS);
    let err = |objective| {
        let (m, _) = train(&spec, &cfg, objective, Sources::with_ood(&shuffled, &sets.ood), &plan, &rng).unwrap();
        1.0 - accuracy(&m, &shuffled).unwrap()
    };
    let (e_std, e_oat) = (err(Objective::Standard), err(Objective::Oat(OatConfig::standard(1.0))));
    (
        e_std < MEMORIZE_ERR_MAX && e_oat > OAT_RANDOM_ERR_MIN,
        format!("final train error on random labels: standard {e_std:.3} (< {MEMORIZE_ERR_MAX}), OAT-S {e_oat:.3} (> {OAT_RANDOM_ERR_MIN})"),
    )
}

fn c13() -> Outcome {
    let (mut mix, mut oat) = (vec![], vec![]);
    for s in SEEDS {
        let sets = desk_sets(s, SMALL_N);
        let run = |gamma| {
            let m = desk_train(&sets.train, &sets.ood, Objective::Mixup(MixupOatConfig { gamma, mix_a: 1.0 }), DESK_STEPS, s);
            1.0 - accuracy(&m, &sets.test).unwrap()
        };
        mix.push(run(0.0));
        oat.push(run(0.6));
    }
    let (a, b) = (mean(&mix), mean(&oat));
    (b <= a, format!("test error: Mixup {a:.3} [{}], OAT+Mixup {b:.3} [{}]", fmt_all(&mix), fmt_all(&oat)))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u8, &str, fn() -> Outcome); 13] = [
        (1, "adversarial OOD feature shift", c1),
        (2, "OOD gradient with zero robust weight", c2),
        (3, "OOD gradient with positive robust weight", c3),
        (4, "standard-learning OOD gradients", c4),
        (5, "averaged-feature classifier sanity", c5),
        (6, "gradient oracle", c6),
        (7, "attack invariants", c7),
        (8, "byte-identical training artifacts", c8),
        (9, "adversarial training direction", c9),
        (10, "standard learning with few samples", c10),
        (11, "random-label memorization", c11),
        (12, "OAT update weighting", c12),
        (13, "OAT with mixup", c13),
    ];
    let only: Option<Vec<u8>> = std::env::var("OAT_ACCEPTANCE").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = f();
        line(id, name, pass, t0.elapsed().as_secs_f64(), &detail);
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
