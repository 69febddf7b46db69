use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use wembed::nn::Checkpoint;
use wembed::train::{check_training_corpus, train, write_log_csv, TrainData};

use super::{compute_targets, load_or_compute_targets, Job, ROLE_HELDOUT, ROLE_TRAIN};
use crate::manifest::{digest_of, print_config, Run};
use crate::{Global, Status};

#[derive(Args)]
pub struct TrainArgs {
    /// Job file (JSON); built-in desk defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total epochs, overriding the job file.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from a checkpoint; epoch numbering carries on.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Cached training targets from an earlier run.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(global: &Global, args: TrainArgs) -> Result<Status> {
    let mut run = Run::start("train", global);
    let (mut job, base) = Job::resolve(args.config.as_deref(), args.seed)?;
    if let Some(path) = &args.config {
        run.input(path);
    }
    if let Some(e) = args.epochs {
        job.train.epochs = e;
    }
    job.train.validate()?;
    print_config("train", &job)?;

    let corpus = job.corpus.load(job.seed, ROLE_TRAIN, &base, &mut run)?;
    check_training_corpus(&corpus).context("training corpus rejected")?;
    let heldout = match &job.heldout {
        Some(src) => Some(src.load(job.seed, ROLE_HELDOUT, &base, &mut run)?),
        None => None,
    };
    let resume = match &args.resume {
        Some(path) => {
            run.input(path);
            Some(Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?)
        }
        None => None,
    };

    let dir = run.out_dir(&args.out)?;
    let targets = load_or_compute_targets(args.targets.as_deref(), &corpus, &job.train, &mut run)?;
    let targets_path = dir.join("targets.csv");
    targets.save(&targets_path)?;
    run.output(&targets_path);
    let heldout_targets = match &heldout {
        Some(h) => {
            let cache = compute_targets(h, &job.train)?;
            let path = dir.join("heldout_targets.csv");
            cache.save(&path)?;
            run.output(&path);
            Some(cache)
        }
        None => None,
    };
    if targets.non_converged() > 0 {
        run.notes.push(format!("{} training pairs excluded as non-converged", targets.non_converged()));
    }

    let data = TrainData {
        corpus: &corpus,
        targets: &targets,
        heldout: heldout.as_ref().zip(heldout_targets.as_ref()).map(|(h, t)| (h.sets.as_slice(), t)),
    };
    let outcome = train(&job.train, &data, resume)?;

    let ck_path = dir.join("checkpoint.json");
    outcome.checkpoint.save(&ck_path)?;
    let log_path = dir.join("train_log.csv");
    write_log_csv(&outcome.log, fs::File::create(&log_path)?)?;
    let job_path = dir.join("job.json");
    fs::write(&job_path, serde_json::to_string_pretty(&job)?)?;
    for p in [&ck_path, &log_path, &job_path] {
        run.output(p);
    }

    if let Some(last) = outcome.log.last() {
        println!("epoch {} loss {:.6} wass {:.6}", last.epoch, last.loss, last.wass);
        if let (Some(r), Some(rmse)) = (last.heldout_r, last.heldout_rmse) {
            println!("heldout r {r:.4} rmse {rmse:.4}");
        }
    }
    if outcome.stopped_early {
        println!("stopped early at epoch {}", outcome.checkpoint.epoch);
        run.notes.push(format!("early stop at epoch {}", outcome.checkpoint.epoch));
    }
    let status = Status::Complete;
    run.finish(&dir, digest_of(&job)?, vec![job.seed], &status)?;
    Ok(status)
}
