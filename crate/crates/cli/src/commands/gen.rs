use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use wembed::dist::{Corpus, CorpusConfig};

use super::preset;
use crate::manifest::{digest_of, print_config, read_json, Run};
use crate::{Global, Status};

#[derive(Args)]
pub struct GenArgs {
    /// Corpus generator config (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in grid: full_1d, full_2d, full_oos_1d, desk_1d, desk_oos_1d.
    #[arg(long, default_value = "full_1d")]
    pub preset: String,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(global: &Global, args: GenArgs) -> Result<Status> {
    let mut run = Run::start("gen", global);
    let mut config: CorpusConfig = match &args.config {
        Some(path) => {
            run.input(path);
            read_json(path)?
        }
        None => preset(&args.preset, 0)?,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    print_config("gen", &config)?;

    let dir = run.out_dir(&args.out)?;
    let corpus = Corpus::generate(&config)?;
    let corpus_path = dir.join("corpus.bin");
    corpus.save(&corpus_path)?;
    let config_path = dir.join("corpus.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config)?)?;
    run.output(&corpus_path);
    run.output(&config_path);

    let mut families: Vec<&str> = config.specs.iter().map(|s| s.family()).collect();
    families.sort_unstable();
    families.dedup();
    println!(
        "{} sets of {} points, dim {}, families: {}",
        corpus.len(),
        config.sample_size,
        corpus.dim(),
        families.join(", ")
    );
    if config.is_eval_only() {
        println!("note: corpus contains evaluation-only families and cannot be used for training");
    }
    println!("corpus digest {}", corpus.digest()?);
    let status = Status::Complete;
    run.finish(&dir, digest_of(&config)?, vec![config.seed], &status)?;
    Ok(status)
}
