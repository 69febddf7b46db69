mod commands;
mod manifest;
mod measures;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{barycenter, eval, gen, sinkhorn, train};

/// Learn Euclidean embeddings of sample sets whose distances track
/// Sinkhorn distances.
#[derive(Parser)]
#[command(name = "wembed", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Worker threads for data-parallel loops; results do not depend on it.
    #[arg(long, global = true, env = "WEMBED_THREADS")]
    pub threads: Option<usize>,
    /// Root that relative `--out` paths resolve against.
    #[arg(long, global = true, env = "WEMBED_OUT_ROOT")]
    pub out_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a corpus of sets from a distribution grid.
    Gen(gen::GenArgs),
    /// Sinkhorn distance between two measure files.
    Sinkhorn(sinkhorn::SinkhornArgs),
    /// Train an encoder against pairwise Sinkhorn targets.
    Train(train::TrainArgs),
    /// Run evaluation experiments on a trained checkpoint.
    Eval(eval::EvalArgs),
    /// Entropic barycenter of 1D measure files on a fixed grid.
    Barycenter(barycenter::BarycenterArgs),
}

/// Command outcome; `Partial` means outputs were written but a numerical
/// budget ran out.
pub enum Status {
    Complete,
    Partial,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = wembed::exec::set_threads(t) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => gen::run(&cli.global, a),
        Command::Sinkhorn(a) => sinkhorn::run(&cli.global, a),
        Command::Train(a) => train::run(&cli.global, a),
        Command::Eval(a) => eval::run(&cli.global, a),
        Command::Barycenter(a) => barycenter::run(&cli.global, a),
    };
    match result {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial) => {
            eprintln!("warning: numerical budget exhausted; outputs are marked partial");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
