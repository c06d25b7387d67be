//! `weavenet` command-line front end: synth, train, infer, eval, bench.

pub mod config;
pub mod io;

mod bench;
mod eval;
mod infer;
mod synth;
mod train;

use std::ffi::OsString;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

pub use bench::BenchArgs;
pub use eval::EvalArgs;
pub use infer::InferArgs;
pub use synth::SynthArgs;
pub use train::TrainArgs;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "DINW_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "weavenet",
    version,
    about = "Deinterlace image sequences with a two-pathway CNN or classical baselines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interlace progressive frames, write ground truth, and optionally pack training patches
    Synth(SynthArgs),
    /// Train the network on a patch archive
    Train(TrainArgs),
    /// Deinterlace frames with the network or a baseline
    Infer(InferArgs),
    /// PSNR/SSIM of predictions against ground truth
    Eval(EvalArgs),
    /// Per-frame wall time of each method at several resolutions
    Bench(BenchArgs),
}

/// Outcome of a command: `Ok(false)` means it finished but reported errors.
type Status = Result<bool>;

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got '{value}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot configure the worker pool")
}

fn dispatch(cli: Cli) -> Status {
    match cli.command {
        Command::Synth(a) => synth::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Infer(a) => infer::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Bench(a) => bench::run(&a),
    }
}

/// Parses `args` (including the program name), merges any `--config` file
/// and runs the command.
pub fn run(args: Vec<OsString>) -> ExitCode {
    let cmd = Cli::command();
    let args = match config::merge_config_file(&cmd, args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = configure_threads().and_then(|()| dispatch(cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
