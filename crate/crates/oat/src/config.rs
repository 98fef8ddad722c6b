//! Flat `key = value` experiment configs.
//!
//! Every key has a default; files and `--set` overrides may only name known
//! keys. The resolved map (defaults included) renders back to the same syntax.

use std::collections::BTreeMap;
use std::fmt;

use oat_core::attacks::{AttackConfig, EPS_8};
use oat_core::data::SynthSpec;
use oat_core::nn::{CnnSpec, InputShape, LossKind, ModelSpec, TrainConfig};
use oat_core::synthetic::{FeatureModelParams, StdFeatureModelParams, TsiprasParams, VerifySetup};
use oat_core::training::{MixupOatConfig, OatConfig, Objective, UidOatConfig};

use crate::error::{CliError, CliResult};

/// `(key, default, meaning)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("mode", "standard", "standard | pgd | trades | oat-a | oat-s | oat-mixup | oat-uid"),
    ("seed", "0", "training seed"),
    ("model", "cnn-small", "logistic | mlp | cnn-small"),
    ("model.hidden", "128", "mlp hidden widths, comma separated"),
    ("model.cnn", "16,32,3,128", "conv1,conv2,kernel,fc of cnn-small"),
    ("train.lr", "0.1", "base learning rate"),
    ("train.steps", "1000", "optimizer steps"),
    ("train.batch_size", "64", "samples per step"),
    ("train.momentum", "0.9", ""),
    ("train.weight_decay", "0.0002", ""),
    ("attack", "none", "training attack: none | pgd | cw | fgsm"),
    ("attack.eps", "0.03137254901960784", "l-inf budget in [0,1] pixel units"),
    ("attack.steps", "10", ""),
    ("attack.step_size", "0.00784313725490196", ""),
    ("attack.loss", "ce", "ce | kl | cw (overrides the attack kind's loss)"),
    ("attack.random_start", "true", ""),
    ("oat.alpha", "1", "OOD loss weight"),
    ("trades.beta", "6", ""),
    ("mixup.gamma", "0.6", "fraction of mixing partners drawn from OOD"),
    ("mixup.a", "1", "Beta(a, a) mixing law"),
    ("uid.alpha_in", "0.3333333333333333", ""),
    ("uid.alpha_o", "0.3333333333333333", ""),
    ("uid.alpha_uid", "0.3333333333333333", ""),
    ("eval.attacks", "PGD20", "comma separated presets (PGD<T>, CW<T>, FGSM); may be empty"),
    ("eval.n", "0", "test samples per evaluation point (0 = all)"),
    ("eval.every", "0", "steps between evaluation points (0 = one epoch)"),
    ("eval.seed", "0", "attack seed of the eval command"),
    ("eval.wall_clock", "false", "record wall time (breaks byte-identical CSVs)"),
    ("data.train", "", "target set file; empty = generate synthetic data"),
    ("data.test", "", ""),
    ("data.ood", "", ""),
    ("data.uid", "", "unlabeled in-distribution file (pseudo-labeled by a standard model)"),
    ("data.format", "oatd", "oatd | cifar10"),
    ("checkpoint", "", "model file for the eval command"),
    ("synth.seed", "0", ""),
    ("synth.num_classes", "4", ""),
    ("synth.channels", "3", ""),
    ("synth.height", "16", ""),
    ("synth.width", "16", ""),
    ("synth.num_nuisance", "32", ""),
    ("synth.ood_classes", "8", "hidden classes of the OOD split"),
    ("synth.rho", "0.2", ""),
    ("synth.template_amp", "0.12", ""),
    ("synth.nuisance_amp", "0.12", ""),
    ("synth.noise_std", "0.08", ""),
    ("synth.n_train", "2000", ""),
    ("synth.n_test", "1000", ""),
    ("synth.n_ood", "4000", ""),
    ("randtest.with_oat", "both", "on | off | both"),
    ("verify.samples", "100000", ""),
    ("verify.seed", "0", ""),
    ("verify.u", "0.1", ""),
    ("verify.v", "0.1", ""),
    ("verify.eta", "1", ""),
    ("verify.d", "64", ""),
    ("verify.lambda", "0.5", ""),
    ("verify.t3_w1", "", "robust weight of T3; empty = 1/d"),
    ("verify.sigma1", "0.1", ""),
    ("verify.sigma2", "1", ""),
    ("verify.kappa", "1", ""),
    ("verify.w1_small", "0.01", ""),
    ("verify.w2", "0.5", ""),
    ("verify.saturation_guard", "0.99", ""),
    ("verify.tsipras_p", "0.9", ""),
    ("verify.tsipras_d", "100", ""),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { values: KEYS.iter().map(|&(k, v, _)| (k, v.to_string())).collect() }
    }
}

fn known(key: &str) -> CliResult<&'static str> {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|(k, _, _)| *k)
        .ok_or_else(|| CliError::Config(format!("unknown key {key:?}")))
}

impl ExperimentConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let key = known(k.trim()).map_err(|e| CliError::Config(format!("line {}: {e}", no + 1)))?;
            if let Some(prev) = seen.insert(key, no + 1) {
                return Err(CliError::Config(format!("line {}: {key} already set on line {prev}", no + 1)));
            }
            cfg.values.insert(key, v.trim().to_string());
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> CliResult<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
        self.values.insert(known(k.trim())?, v.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("{key} is not a config key"))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> CliResult<T> {
        let v = self.get(key);
        v.parse().map_err(|_| CliError::Config(format!("{key} = {v:?} is not {what}")))
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        let x: f64 = self.parsed(key, "a number")?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(CliError::Config(format!("{key} must be finite")))
        }
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> CliResult<u64> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        match self.get(key) {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            v => Err(CliError::Config(format!("{key} = {v:?} is not a boolean"))),
        }
    }

    fn usizes(&self, key: &str) -> CliResult<Vec<usize>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("{key}: {s:?} is not an integer"))))
            .collect()
    }

    /// Empty string for keys whose empty value means "absent".
    pub fn path(&self, key: &str) -> Option<&str> {
        Some(self.get(key)).filter(|v| !v.is_empty())
    }

    pub fn model_spec(&self, input: InputShape, num_classes: usize) -> CliResult<ModelSpec> {
        let spec = match self.get("model") {
            "logistic" => ModelSpec::logistic(input, num_classes),
            "mlp" => ModelSpec::mlp(input, self.usizes("model.hidden")?, num_classes),
            "cnn-small" => match self.usizes("model.cnn")?[..] {
                [conv1, conv2, kernel, fc] => ModelSpec::cnn_small(input, CnnSpec { conv1, conv2, kernel, fc }, num_classes),
                _ => return Err(CliError::Config("model.cnn needs four integers".into())),
            },
            m => return Err(CliError::Config(format!("unknown model {m:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let cfg = TrainConfig {
            base_lr: self.f64("train.lr")?,
            total_steps: self.usize("train.steps")?,
            batch_size: self.usize("train.batch_size")?,
            momentum: self.f64("train.momentum")?,
            weight_decay: self.f64("train.weight_decay")?,
            seed: self.u64("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The training attack, if `attack` is not `none`.
    pub fn attack(&self) -> CliResult<Option<AttackConfig>> {
        let steps = self.usize("attack.steps")?;
        let base = match self.get("attack") {
            "none" => return Ok(None),
            "pgd" => AttackConfig::pgd(steps),
            "cw" => AttackConfig::cw(steps),
            "fgsm" => AttackConfig::fgsm(EPS_8),
            a => return Err(CliError::Config(format!("unknown attack {a:?}"))),
        };
        let loss = match self.get("attack.loss") {
            "ce" => base.loss,
            "kl" => LossKind::Kl,
            "cw" => LossKind::CwMargin { kappa: 0.0 },
            l => return Err(CliError::Config(format!("unknown attack.loss {l:?}"))),
        };
        let eps = self.f64("attack.eps")?;
        let cfg = if self.get("attack") == "fgsm" {
            AttackConfig { loss, ..AttackConfig::fgsm(eps) }
        } else {
            AttackConfig {
                eps,
                step_size: self.f64("attack.step_size")?,
                random_start: self.bool("attack.random_start")?,
                loss,
                ..base
            }
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }

    pub fn eval_attacks(&self) -> CliResult<Vec<AttackConfig>> {
        self.get("eval.attacks")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| AttackConfig::preset(s).ok_or_else(|| CliError::Config(format!("unknown attack preset {s:?}"))))
            .collect()
    }

    pub fn objective(&self) -> CliResult<Objective> {
        let mode = self.get("mode");
        let attack = self.attack()?;
        let need = |a: Option<AttackConfig>| a.ok_or_else(|| CliError::Config(format!("mode {mode} needs attack keys (attack = pgd)")));
        let refuse = |a: Option<AttackConfig>| match a {
            Some(_) => Err(CliError::Config(format!("mode {mode} takes no training attack; set attack = none"))),
            None => Ok(()),
        };
        let obj = match mode {
            "standard" => {
                refuse(attack)?;
                Objective::Standard
            }
            "pgd" => Objective::PgdAt(need(attack)?),
            "trades" => {
                let a = need(attack)?;
                Objective::Trades { attack: AttackConfig { loss: LossKind::Kl, ..a }, beta: self.f64("trades.beta")? }
            }
            "oat-a" => Objective::Oat(OatConfig::adversarial(self.f64("oat.alpha")?, need(attack)?)),
            "oat-s" => {
                refuse(attack)?;
                Objective::Oat(OatConfig::standard(self.f64("oat.alpha")?))
            }
            "oat-mixup" => {
                refuse(attack)?;
                Objective::Mixup(MixupOatConfig { gamma: self.f64("mixup.gamma")?, mix_a: self.f64("mixup.a")? })
            }
            "oat-uid" => Objective::OatUid(UidOatConfig {
                alpha_in: self.f64("uid.alpha_in")?,
                alpha_o: self.f64("uid.alpha_o")?,
                alpha_uid: self.f64("uid.alpha_uid")?,
                attack: need(attack)?,
            }),
            m => return Err(CliError::Config(format!("unknown mode {m:?}"))),
        };
        Ok(obj)
    }

    pub fn synth_spec(&self) -> CliResult<SynthSpec> {
        let spec = SynthSpec {
            num_classes: self.usize("synth.num_classes")?,
            channels: self.usize("synth.channels")?,
            height: self.usize("synth.height")?,
            width: self.usize("synth.width")?,
            num_nuisance: self.usize("synth.num_nuisance")?,
            ood_classes: self.usize("synth.ood_classes")?,
            rho: self.f64("synth.rho")?,
            template_amp: self.f64("synth.template_amp")?,
            nuisance_amp: self.f64("synth.nuisance_amp")?,
            noise_std: self.f64("synth.noise_std")?,
            n_train: self.usize("synth.n_train")?,
            n_test: self.usize("synth.n_test")?,
            n_ood: self.usize("synth.n_ood")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn verify_setup(&self) -> CliResult<VerifySetup> {
        let t3_w1 = match self.path("verify.t3_w1") {
            None => None,
            Some(_) => Some(self.f64("verify.t3_w1")?),
        };
        let setup = VerifySetup {
            features: FeatureModelParams {
                u: self.f64("verify.u")?,
                v: self.f64("verify.v")?,
                eta: self.f64("verify.eta")?,
                d: self.usize("verify.d")?,
            },
            std_features: StdFeatureModelParams {
                sigma1: self.f64("verify.sigma1")?,
                sigma2: self.f64("verify.sigma2")?,
                kappa: self.f64("verify.kappa")?,
                ..StdFeatureModelParams::default()
            },
            lambda: self.f64("verify.lambda")?,
            t3_w1,
            w1_small: self.f64("verify.w1_small")?,
            w2: self.f64("verify.w2")?,
            saturation_guard: self.f64("verify.saturation_guard")?,
            ..VerifySetup::default()
        };
        setup.features.validate()?;
        setup.std_features.validate()?;
        Ok(setup)
    }

    /// Tsipras model for the f_avg sanity check, with eps = 2/sqrt(d).
    pub fn tsipras(&self) -> CliResult<TsiprasParams> {
        let d = self.usize("verify.tsipras_d")?;
        let p = TsiprasParams { p: self.f64("verify.tsipras_p")?, eps_mean: 2.0 / (d as f64).sqrt(), d };
        p.validate()?;
        Ok(p)
    }
}

impl fmt::Display for ExperimentConfig {
    /// One `key = value` line per key, in key order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
