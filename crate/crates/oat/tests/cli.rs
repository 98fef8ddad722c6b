use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oat")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn small_synth() -> Vec<String> {
    ["synth.n_train=400", "synth.n_test=200", "synth.n_ood=200"].iter().map(|s| s.to_string()).collect()
}

fn run(cmd: &str, out: &Path, sets: &[String]) -> Output {
    let mut args = vec![cmd.to_string(), "--out".into(), out.display().to_string()];
    for s in sets {
        args.push("--set".into());
        args.push(s.clone());
    }
    oat(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn gen_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = run("gen", &data, &small_synth());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["train.oatd", "test.oatd", "ood.oatd", "config.txt"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let run_dir = dir.path().join("run");
    let mut sets = vec![
        format!("data.train={}", data.join("train.oatd").display()),
        format!("data.test={}", data.join("test.oatd").display()),
        "train.steps=120".into(),
        "train.lr=0.02".into(),
        "eval.attacks=".into(),
    ];
    let o = run("train", &run_dir, &sets);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("step,lr,train_loss,train_err,clean_acc,beta_s,beta_a,wall_ms\n"));
    assert_eq!(csv.lines().last().unwrap().split(',').next(), Some("120"));

    sets.push(format!("checkpoint={}", run_dir.join("model.oatm").display()));
    sets.push("eval.attacks=PGD20".into());
    let eval_dir = dir.path().join("eval");
    let o = run("eval", &eval_dir, &sets);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(eval_dir.join("report.txt")).unwrap();
    let clean: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("clean_acc = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(clean > 0.85, "{report}");
    assert!(report.contains("robust_acc.PGD20 = "));
}

#[test]
fn train_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut sets = small_synth();
    sets.extend(["mode=oat-a", "attack=pgd", "attack.steps=2", "train.steps=12", "eval.every=4", "eval.n=64", "model=mlp", "model.hidden=16"].map(String::from));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("train", &a, &sets)), 0);
    assert_eq!(code(&run("train", &b, &sets)), 0);
    for f in ["metrics.csv", "model.oatm", "report.txt", "config.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().all(|l| l.split(',').count() == 9));
}

#[test]
fn resolved_config_is_echoed_and_reloadable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    fs::write(&cfg, "# tiny\nsynth.n_train = 8\nsynth.n_test = 4\nsynth.n_ood = 4\n").unwrap();
    let out = dir.path().join("g");
    let o = oat(&["gen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("synth.n_train = 8\n"));
    assert!(echo.contains("train.lr = 0.1\n"));
    let again = dir.path().join("g2");
    assert_eq!(code(&oat(&["gen", "--config", out.join("config.txt").to_str().unwrap(), "--out", again.to_str().unwrap()])), 0);
    assert_eq!(fs::read(out.join("train.oatd")).unwrap(), fs::read(again.join("train.oatd")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let unknown = dir.path().join("bad.conf");
    fs::write(&unknown, "learning_rate = 0.1\n").unwrap();
    assert_eq!(code(&oat(&["train", "--config", unknown.to_str().unwrap(), "--out", out.to_str().unwrap()])), 1);
    assert_eq!(code(&run("train", &out, &["mode=oat-a".into()])), 1);
    assert_eq!(code(&run("train", &out, &["data.train=/nonexistent/train.oatd".into()])), 3);
    assert_eq!(code(&run("eval", &out, &["checkpoint=/nonexistent/m.oatm".into()])), 3);
    assert_eq!(code(&oat(&["train", "--config", "/nonexistent.conf"])), 3);
    assert_eq!(code(&run("train", &out, &["train.lr=1e300".into(), "train.steps=3".into(), "model=logistic".into()])), 2);
}

#[test]
fn verify_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    run("verify", &out, &["verify.lambda=0".into(), "verify.samples=20000".into()]);
    let t1 = fs::read_to_string(out.join("verify-T1.txt")).unwrap();
    let deltas: Vec<f64> = t1
        .lines()
        .filter(|l| l.contains("_shift"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(!deltas.is_empty(), "{t1}");
    assert!(deltas.iter().all(|&d| d == 0.0), "{t1}");

    let guard = dir.path().join("g");
    let o = run("verify", &guard, &["verify.d=1".into(), "verify.eta=0".into(), "verify.samples=10000".into()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("approximation regime not met"));
    assert!(fs::read_to_string(guard.join("verify-T2.txt")).unwrap().contains("status = approximation regime not met"));
}

#[test]
fn verify_passes_in_the_saturated_regime() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("verify", dir.path(), &["verify.eta=4".into()]);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}
