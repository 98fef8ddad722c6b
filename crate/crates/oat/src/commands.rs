//! The five subcommands. Each writes its artifacts plus `config.txt` (the
//! resolved config) under the output directory and returns a short summary.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use oat_core::data::{gen_synthetic, Dataset, SynthSets};
use oat_core::eval::evaluate;
use oat_core::nn::{InputShape, ModelSpec, TrainConfig};
use oat_core::synthetic::{f_avg_accuracy, verify_theorem, TheoremId, VerifyStatus};
use oat_core::training::{pseudo_label, randomization_test, train, train_standard, EvalPlan, Objective, Sources};
use oat_core::RngState;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::io::{read_dataset, read_model, write, write_dataset, write_model, DataFormat};
use crate::report::{best_text, eval_text, metrics_csv, verification_text};

const TSIPRAS_SAMPLES: usize = 100_000;

/// Datasets a run works on.
pub struct Data {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub ood: Option<Dataset>,
    pub uid: Option<Dataset>,
}

fn echo_config(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    write(&out.join("config.txt"), cfg.to_string())
}

fn synth(cfg: &ExperimentConfig) -> CliResult<SynthSets> {
    Ok(gen_synthetic(&cfg.synth_spec()?, &RngState::from_seed(cfg.u64("synth.seed")?))?)
}

/// Reads `data.*` files, or generates the synthetic splits when
/// `data.train` is empty. A synthetic run without `data.uid` draws its
/// unlabeled in-distribution set from a second generation.
pub fn load_data(cfg: &ExperimentConfig) -> CliResult<Data> {
    let format = DataFormat::parse(cfg.get("data.format"))?;
    let file = |key: &str| cfg.path(key).map(|p| read_dataset(Path::new(p), format)).transpose();
    let uid = file("data.uid")?;
    match cfg.path("data.train") {
        Some(p) => Ok(Data { train: read_dataset(Path::new(p), format)?, test: file("data.test")?, ood: file("data.ood")?, uid }),
        None => {
            let s = synth(cfg)?;
            let uid = match uid {
                Some(u) => Some(u),
                None if cfg.get("mode") == "oat-uid" => {
                    let spec = cfg.synth_spec()?;
                    let extra = gen_synthetic(&spec, &RngState::from_seed(cfg.u64("synth.seed")?).split(4))?;
                    Some(extra.train.unlabeled())
                }
                None => None,
            };
            Ok(Data { train: s.train, test: Some(s.test), ood: Some(s.ood), uid })
        }
    }
}

fn model_spec(cfg: &ExperimentConfig, d: &Dataset) -> CliResult<ModelSpec> {
    let (c, h, w) = d.dims();
    cfg.model_spec(InputShape::image(c, h, w), d.num_classes())
}

fn missing(what: &str, key: &str) -> CliError {
    CliError::Config(format!("this run needs a {what} set ({key})"))
}

fn run_plan<'a>(cfg: &ExperimentConfig, test: Option<&'a Dataset>) -> CliResult<EvalPlan<'a>> {
    Ok(EvalPlan {
        test,
        attacks: cfg.eval_attacks()?,
        eval_n: cfg.usize("eval.n")?,
        every: cfg.usize("eval.every")?,
        skip_train_err: false,
        clock: None,
    })
}

/// Runs all Monte Carlo theorem checks plus the f_avg sanity check.
pub fn verify(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    echo_config(cfg, out)?;
    let setup = cfg.verify_setup()?;
    let n = cfg.usize("verify.samples")?;
    let rng = RngState::from_seed(cfg.u64("verify.seed")?);
    let mut summary = String::new();
    let (mut tolerance, mut regime) = (Vec::new(), Vec::new());
    for (k, id) in TheoremId::ALL.into_iter().enumerate() {
        let r = verify_theorem(id, &setup, n, &mut rng.split(k as u64))?;
        write(&out.join(format!("verify-{id}.txt")), verification_text(&r))?;
        let _ = writeln!(summary, "{id}: {}", r.status.name());
        match r.status {
            VerifyStatus::Pass => {}
            VerifyStatus::ToleranceFail => tolerance.push(id.name()),
            VerifyStatus::RegimeNotMet => regime.push(id.name()),
        }
    }
    let tp = cfg.tsipras()?;
    let lambda = 2.0 * tp.eps_mean;
    let (clean, adv) = f_avg_accuracy(&tp, lambda, TSIPRAS_SAMPLES, &mut rng.split(TheoremId::ALL.len() as u64))?;
    let ok = clean > 0.97 && adv < 0.10;
    let text = format!(
        "p = {}\nd = {}\neps = {}\nlambda = {lambda}\nsamples = {TSIPRAS_SAMPLES}\nclean_acc = {clean}\nadv_acc = {adv}\nstatus = {}\n",
        tp.p,
        tp.d,
        tp.eps_mean,
        if ok { "pass" } else { "tolerance-fail" }
    );
    write(&out.join("verify-tsipras.txt"), text)?;
    let _ = writeln!(summary, "tsipras: {} (clean {clean:.4}, adversarial {adv:.4})", if ok { "pass" } else { "tolerance-fail" });
    if !ok {
        tolerance.push("tsipras");
    }
    if !regime.is_empty() {
        return Err(CliError::Regime(format!("approximation regime not met: {}\n{summary}", regime.join(", "))));
    }
    if !tolerance.is_empty() {
        return Err(CliError::Check(format!("{}\n{summary}", tolerance.join(", "))));
    }
    Ok(summary)
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    echo_config(cfg, out)?;
    let s = synth(cfg)?;
    for (name, d) in [("train", &s.train), ("test", &s.test), ("ood", &s.ood)] {
        write_dataset(&out.join(format!("{name}.oatd")), d)?;
    }
    Ok(format!("wrote {} train, {} test, {} ood samples\n", s.train.len(), s.test.len(), s.ood.len()))
}

/// Pseudo-labels the unlabeled in-distribution set with a standard model
/// trained on the target set.
fn labeled_uid(spec: &ModelSpec, tc: &TrainConfig, data: &Data, rng: &RngState) -> CliResult<Dataset> {
    let uid = data.uid.as_ref().ok_or_else(|| missing("unlabeled in-distribution", "data.uid"))?;
    let (labeler, _) = train_standard(spec, &data.train, tc, &EvalPlan::final_only(tc.total_steps), &rng.split(100))?;
    Ok(pseudo_label(&labeler, uid)?)
}

pub fn train_cmd(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let objective = cfg.objective()?;
    let tc = cfg.train_config()?;
    let data = load_data(cfg)?;
    let spec = model_spec(cfg, &data.train)?;
    echo_config(cfg, out)?;
    let rng = RngState::from_seed(cfg.u64("seed")?);
    let uid = match objective {
        Objective::OatUid(_) => Some(labeled_uid(&spec, &tc, &data, &rng)?),
        _ => None,
    };
    let sources = Sources { target: &data.train, ood: data.ood.as_ref(), uid: uid.as_ref() };
    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64() * 1000.0;
    let mut plan = run_plan(cfg, data.test.as_ref())?;
    if cfg.bool("eval.wall_clock")? {
        plan.clock = Some(&clock);
    }
    let (model, metrics) = train(&spec, &tc, objective, sources, &plan, &rng)?;
    write(&out.join("metrics.csv"), metrics_csv(&metrics))?;
    write_model(&out.join("model.oatm"), &model)?;
    let mut summary = format!("trained {} steps\n", tc.total_steps);
    if let Some(test) = &data.test {
        let report = evaluate(&model, test, &plan.attacks, &rng.split(101))?;
        let text = eval_text(&report) + &best_text(&metrics);
        write(&out.join("report.txt"), &text)?;
        summary += &text;
    }
    Ok(summary)
}

pub fn eval_cmd(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let path = cfg.path("checkpoint").ok_or_else(|| CliError::Config("eval needs checkpoint = <model file>".into()))?;
    let model = read_model(Path::new(path))?;
    let test = match cfg.path("data.test") {
        Some(p) => read_dataset(Path::new(p), DataFormat::parse(cfg.get("data.format"))?)?,
        None => synth(cfg)?.test,
    };
    let attacks = cfg.eval_attacks()?;
    echo_config(cfg, out)?;
    let n = cfg.usize("eval.n")?;
    let test = if n > 0 && n < test.len() { test.take(n) } else { test };
    let report = evaluate(&model, &test, &attacks, &RngState::from_seed(cfg.u64("eval.seed")?))?;
    let text = eval_text(&report);
    write(&out.join("report.txt"), &text)?;
    Ok(text)
}

/// Trains on a random-label copy of the target set with and/or without
/// OAT-S and writes one metrics CSV per variant.
pub fn randtest(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let variants: &[bool] = match cfg.get("randtest.with_oat") {
        "on" => &[true],
        "off" => &[false],
        "both" => &[false, true],
        v => return Err(CliError::Config(format!("randtest.with_oat = {v:?} is not on, off or both"))),
    };
    let tc = cfg.train_config()?;
    let data = load_data(cfg)?;
    let ood = data.ood.as_ref().ok_or_else(|| missing("OOD", "data.ood"))?;
    let spec = model_spec(cfg, &data.train)?;
    echo_config(cfg, out)?;
    let rng = RngState::from_seed(cfg.u64("seed")?);
    let mut plan = run_plan(cfg, None)?;
    plan.attacks.clear();
    let mut summary = String::new();
    for &with_oat in variants {
        let metrics = randomization_test(&spec, &data.train, ood, &tc, with_oat, &plan, &rng)?;
        let name = if with_oat { "randtest-oat" } else { "randtest-standard" };
        write(&out.join(format!("{name}.csv")), metrics_csv(&metrics))?;
        let err = metrics.last().and_then(|r| r.train_err).unwrap_or(f64::NAN);
        let _ = writeln!(summary, "{name}: final train_err = {err}");
    }
    Ok(summary)
}
