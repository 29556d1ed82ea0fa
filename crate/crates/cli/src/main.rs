//! `graphclip` command-line entry point.
//!
//! Every subcommand accepts `--config <file.toml>`, `--out <dir>` and any
//! number of `--dotted.key value` overrides. Exit codes: 0 success, 2 usage,
//! 3 validation, 4 acceptance-gate failure.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;
use crate::run::RunDir;

#[derive(Parser)]
#[command(name = "graphclip", version, about = "Graph-summary contrastive pretraining and zero-shot transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `--section.key value` overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample RWR ego-subgraphs with positional encodings.
    Sample(Common),
    /// Generate graph-summary pairs through an LLM client.
    GenCorpus(Common),
    /// Contrastive pretraining with the adversarial inner loop.
    Pretrain(Common),
    /// Zero-shot (or few-shot with `--shots k`) node classification.
    EvalNc(Common),
    /// Zero-shot link prediction.
    EvalLp(Common),
    /// Few-shot graph prompt tuning.
    Tune(Common),
    /// Monte-Carlo checks of the alignment theory.
    Theory(Common),
    /// Finite-difference gradient verification.
    GradCheck(Common),
    /// Write synthetic source/target graphs, labels, pairs and a toy config.
    MakeSynthetic(Common),
}

type Handler = fn(&config::RunConfig, &mut RunDir) -> Result<(), CliError>;

fn dispatch(command: Command) -> Result<(), CliError> {
    let (name, section, common, handler): (&str, &str, Common, Handler) = match command {
        Command::Sample(c) => ("sample", "sample", c, commands::sample),
        Command::GenCorpus(c) => ("gen-corpus", "corpus", c, commands::gen_corpus),
        Command::Pretrain(c) => ("pretrain", "pretrain", c, commands::pretrain_cmd),
        Command::EvalNc(c) => ("eval-nc", "eval", c, commands::eval_nc),
        Command::EvalLp(c) => ("eval-lp", "link", c, commands::eval_lp),
        Command::Tune(c) => ("tune", "tune", c, commands::tune),
        Command::Theory(c) => ("theory", "theory", c, commands::theory),
        Command::GradCheck(c) => ("grad-check", "gradcheck", c, commands::grad_check_cmd),
        Command::MakeSynthetic(c) => ("make-synthetic", "synthetic", c, commands::make_synthetic),
    };
    let overrides = config::parse_overrides(&common.overrides)?;
    let mut cfg = config::load(common.config.as_deref(), &overrides, section)?;
    if let Some(out) = common.out {
        cfg.out_dir = Some(out);
    }
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory (pass --out <dir> or set out_dir)".into()))?;
    let mut run = RunDir::create(&out)?;
    if let Some(p) = &common.config {
        run.input(p)?;
    }
    let result = handler(&cfg, &mut run);
    run.finish(name, &cfg)?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(if code == 0 { 0 } else { 2 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code() as u8)
        }
    }
}
