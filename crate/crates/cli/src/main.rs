use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use set_twister::tasks::Split;

mod count;
mod eval;
mod gen;
mod opts;
mod train;
mod verify;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "SET_TWISTER_OUT";

#[derive(Parser, Debug)]
#[command(name = "set-twister", version, about = "Set Twister and DeepSets experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a sequence task dataset or a synthetic graph.
    Gen(gen::GenArgs),
    /// Train a model and write a run directory.
    Train {
        /// TOML file with run settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory (default: a fresh directory under the output root).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: opts::TrainOpts,
    },
    /// Score a checkpoint on one split of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Run the built-in correctness suites.
    Verify(verify::VerifyArgs),
    /// Print parameter and operation counts.
    ParamCount(count::CountArgs),
}

fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    let root = output_root();
    match cli.command {
        Command::Gen(args) => {
            gen::run(&args, &root)?;
        }
        Command::Train { config, out, opts } => {
            train::run(opts, config.as_deref(), out.as_deref(), Path::new(&root))?;
        }
        Command::Eval { checkpoint, data, split } => eval::run(&checkpoint, &data, split)?,
        Command::Verify(args) => return verify::run(&args),
        Command::ParamCount(args) => count::print_breakdown(&args)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
