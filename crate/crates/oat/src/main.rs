use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oat::{commands, CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "oat", version, about = "OOD-augmented training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo checks of the feature-model results
    Verify(Common),
    /// Write the synthetic train/test/OOD splits
    Gen(Common),
    /// Train a model and write metrics, checkpoint and report
    Train(Common),
    /// Evaluate a checkpoint
    Eval(Common),
    /// Random-label memorization run with and without OOD data
    Randtest(Common),
    /// List every config key with its default
    Keys,
}

#[derive(clap::Args)]
struct Common {
    /// `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::parse(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
            None => ExperimentConfig::default(),
        };
        for s in &self.set {
            cfg.set(s)?;
        }
        Ok(cfg)
    }
}

fn dispatch(cmd: &Command) -> CliResult<String> {
    let (args, f): (&Common, fn(&ExperimentConfig, &Path) -> CliResult<String>) = match cmd {
        Command::Verify(a) => (a, commands::verify),
        Command::Gen(a) => (a, commands::gen),
        Command::Train(a) => (a, commands::train_cmd),
        Command::Eval(a) => (a, commands::eval_cmd),
        Command::Randtest(a) => (a, commands::randtest),
        Command::Keys => {
            return Ok(oat::config::KEYS.iter().map(|(k, v, help)| format!("{k} = {v}{}{help}\n", if help.is_empty() { "" } else { "  # " })).collect());
        }
    };
    f(&args.resolve()?, &args.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
