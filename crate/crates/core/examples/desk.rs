//! One desk-scale comparison on the synthetic task.
//!
//! Knobs come from the environment: `SEED`, `NTRAIN`, `TA`, `NA`, `NS`, `RHO`
//! (synthetic spec), `STEPS`, `LR`, `K` (training PGD steps), `NTEST`,
//! `ALPHA`, `GAMMA`, `SHUFFLE` (train on random labels) and `RUN`, a comma
//! list drawn from `std,pgd,oat,oats,mix,oatmix,trades`.
//!
//! ```text
//! RUN=std,oats NTRAIN=500 cargo run --release --example desk
//! ```

use oat_core::attacks::{AttackConfig, EPS_8};
use oat_core::data::{gen_synthetic, SynthSpec};
use oat_core::eval::{accuracy, robust_accuracy};
use oat_core::nn::{CnnSpec, LossKind, ModelSpec, TrainConfig};
use oat_core::training::{random_label_copy, train, EvalPlan, MixupOatConfig, OatConfig, Objective, Sources};
use oat_core::RngState;
use std::time::Instant;

fn env(k: &str, d: f64) -> f64 {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_train: env("NTRAIN", d.n_train as f64) as usize,
        template_amp: env("TA", d.template_amp),
        nuisance_amp: env("NA", d.nuisance_amp),
        noise_std: env("NS", d.noise_std),
        rho: env("RHO", d.rho),
        ..d
    };
    let seed = env("SEED", 1.0) as u64;
    let mut sets = gen_synthetic(&spec, &RngState::from_seed(seed)).unwrap();
    if env("SHUFFLE", 0.0) != 0.0 {
        sets.train = random_label_copy(&sets.train, &RngState::from_seed(seed)).unwrap();
    }
    let ms = ModelSpec::cnn_small(sets.train.shape(), CnnSpec::default(), spec.num_classes);
    let steps = env("STEPS", 600.0) as usize;
    let cfg = TrainConfig { base_lr: env("LR", 0.02), total_steps: steps, batch_size: 64, seed, ..Default::default() };
    let k = env("K", 5.0) as usize;
    let train_attack = AttackConfig { step_size: 2.5 * EPS_8 / k as f64, ..AttackConfig::pgd(k) };
    let plan = EvalPlan::final_only(steps);
    let test = sets.test.take(env("NTEST", 1000.0) as usize);
    let which = std::env::var("RUN").unwrap_or_else(|_| "std,pgd,oat".into());
    let alpha = env("ALPHA", 1.0);
    for w in which.split(',') {
        let t0 = Instant::now();
        let obj = match w {
            "std" => Objective::Standard,
            "pgd" => Objective::PgdAt(train_attack),
            "oat" => Objective::Oat(OatConfig::adversarial(alpha, train_attack)),
            "oats" => Objective::Oat(OatConfig::standard(alpha)),
            "mix" => Objective::Mixup(MixupOatConfig { gamma: 0.0, mix_a: 1.0 }),
            "oatmix" => Objective::Mixup(MixupOatConfig { gamma: env("GAMMA", 0.6), mix_a: 1.0 }),
            "trades" => Objective::Trades { attack: AttackConfig { loss: LossKind::Kl, ..train_attack }, beta: 6.0 },
            other => {
                eprintln!("unknown run '{other}'");
                std::process::exit(1);
            }
        };
        let rng = RngState::from_seed(1000 + seed);
        let (m, _) = train(&ms, &cfg, obj, Sources::with_ood(&sets.train, &sets.ood), &plan, &rng).unwrap();
        let tr = accuracy(&m, &sets.train).unwrap();
        let clean = accuracy(&m, &test).unwrap();
        let rob = robust_accuracy(&m, &test, &AttackConfig::pgd(20), &RngState::from_seed(90 + seed)).unwrap();
        println!("{w:7} train {tr:.3} clean {clean:.3} pgd20 {rob:.3}  ({:.1}s)", t0.elapsed().as_secs_f64());
    }
}
