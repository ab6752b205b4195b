mod args;
mod commands;
mod manifest;

use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use commands::Run;

const THREADS_VAR: &str = "LAGCL_THREADS";

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("invalid value for `{THREADS_VAR}`: `{raw}` is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot configure the worker pool")?;
    Ok(())
}

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    configure_threads()?;
    let name = match &cli.command {
        Command::Prepare(_) => "prepare",
        Command::Synth(_) => "synth",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Analyze(_) => "analyze",
        Command::Ablate(_) => "ablate",
    };
    let ctx = Run {
        command: name,
        argv,
        started: Instant::now(),
    };
    match &cli.command {
        Command::Prepare(a) => commands::prepare(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Train(a) => commands::train_cmd(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Analyze(a) => commands::analyze(&ctx, a),
        Command::Ablate(a) => commands::ablate(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv: Vec<String> = std::env::args().collect();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
