//! CSV and plain-text renderings of run results.

use std::fmt::Write;

use oat_core::eval::EvalReport;
use oat_core::synthetic::VerificationReport;
use oat_core::training::RunMetrics;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header `step,lr,train_loss,train_err,clean_acc,<attacks>,beta_s,beta_a,wall_ms`,
/// one row per record. Unmeasured values are empty fields.
pub fn metrics_csv(m: &RunMetrics) -> String {
    let mut out = String::from("step,lr,train_loss,train_err,clean_acc");
    for a in &m.attack_names {
        out.push(',');
        out.push_str(a);
    }
    out.push_str(",beta_s,beta_a,wall_ms\n");
    for r in &m.records {
        let _ = write!(out, "{},{},{},{},{}", r.step, r.lr, r.train_loss, opt(r.train_err), opt(r.clean_acc));
        for i in 0..m.attack_names.len() {
            let _ = write!(out, ",{}", opt(r.robust.get(i).copied()));
        }
        let _ = writeln!(out, ",{},{},{}", opt(r.beta_s), opt(r.beta_a), r.wall_ms);
    }
    out
}

pub fn eval_text(r: &EvalReport) -> String {
    let mut out = format!("n_eval = {}\nclean_acc = {}\n", r.n_eval, r.clean_acc);
    for (name, acc) in &r.robust_acc {
        let _ = writeln!(out, "robust_acc.{name} = {acc}");
    }
    let _ = write!(out, "beta_s = {}\nbeta_a = {}\n", r.beta_s, r.beta_a);
    out
}

pub fn best_text(m: &RunMetrics) -> String {
    match &m.best {
        Some(b) => format!("best.step = {}\nbest.robust_acc = {}\nbest.clean_acc = {}\n", b.step, b.robust_acc, opt(b.clean_acc)),
        None => String::new(),
    }
}

pub fn verification_text(r: &VerificationReport) -> String {
    let mut out = format!("theorem = {}\nsamples = {}\nstatus = {}\n", r.id, r.n_samples, r.status.name());
    if let Some((name, value, bound)) = &r.regime {
        let _ = writeln!(out, "regime.{name} = {value} (bound {bound})");
    }
    out.push_str("check,estimate,target,se,tolerance,rule,pass\n");
    for c in &r.checks {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", c.name, c.estimate, c.target, c.se, c.tolerance, c.rule.name(), c.pass);
    }
    out
}
