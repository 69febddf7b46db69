pub mod barycenter;
pub mod eval;
pub mod gen;
pub mod sinkhorn;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wembed::dist::{derive_seed, Corpus, CorpusConfig};
use wembed::eval::EvalOptions;
use wembed::train::{all_pairs, precompute_targets, TargetCache, TrainConfig};
use wembed::Exec;

use crate::manifest::{read_json, Run};

pub const PRESETS: [&str; 5] = ["full_1d", "full_2d", "full_oos_1d", "desk_1d", "desk_oos_1d"];

pub fn preset(name: &str, seed: u64) -> Result<CorpusConfig> {
    Ok(match name {
        "full_1d" => CorpusConfig::full_1d(seed),
        "full_2d" => CorpusConfig::full_2d(seed),
        "full_oos_1d" => CorpusConfig::full_out_of_sample_1d(seed),
        "desk_1d" => CorpusConfig::desk_1d(seed),
        "desk_oos_1d" => CorpusConfig::desk_out_of_sample_1d(seed),
        other => bail!("unknown preset {other:?}; valid presets: {}", PRESETS.join(", ")),
    })
}

/// Where a corpus comes from: a named preset, a saved corpus file, or an
/// inline generator config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusSource {
    Preset { preset: String },
    File { file: PathBuf },
    Config(CorpusConfig),
}

impl CorpusSource {
    /// Generated sources get their seed from the command seed and `role`.
    pub fn load(&self, seed: u64, role: u64, base: &Path, run: &mut Run) -> Result<Corpus> {
        let corpus = match self {
            CorpusSource::Preset { preset: name } => Corpus::generate(&preset(name, derive_seed(seed, &[role]))?)?,
            CorpusSource::Config(c) => Corpus::generate(&c.clone().with_seed(derive_seed(seed, &[role])))?,
            CorpusSource::File { file } => {
                let path = base.join(file);
                run.input(&path);
                Corpus::load(&path).with_context(|| format!("loading corpus {}", path.display()))?
            }
        };
        Ok(corpus)
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

/// Shared job file for `train` and `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Job {
    pub seed: u64,
    pub corpus: CorpusSource,
    /// Early-stopping and monitoring sets.
    pub heldout: Option<CorpusSource>,
    pub out_of_sample: Option<CorpusSource>,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    #[serde(default = "default_seeds")]
    pub ablation_seeds: Vec<u64>,
}

impl Default for Job {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: CorpusSource::Preset { preset: "desk_1d".into() },
            heldout: Some(CorpusSource::Preset { preset: "desk_1d".into() }),
            out_of_sample: Some(CorpusSource::Preset { preset: "desk_oos_1d".into() }),
            train: TrainConfig::desk(0),
            eval: EvalOptions::default(),
            ablation_seeds: default_seeds(),
        }
    }
}

pub const ROLE_TRAIN: u64 = 1;
pub const ROLE_HELDOUT: u64 = 2;
pub const ROLE_OOS: u64 = 3;

impl Job {
    /// Load `path` (or defaults), then push the command seed into every
    /// seeded component.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> Result<(Self, PathBuf)> {
        let (mut job, base) = match path {
            Some(p) => (read_json::<Job>(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (Job::default(), PathBuf::new()),
        };
        if let Some(s) = seed {
            job.seed = s;
        }
        job.train.seed = job.seed;
        job.eval.seed = job.seed;
        job.train.validate()?;
        Ok((job, base))
    }
}

pub fn compute_targets(corpus: &Corpus, config: &TrainConfig) -> Result<TargetCache> {
    let pairs = all_pairs(corpus.len());
    log::info!("computing {} Sinkhorn targets for {}", pairs.len(), corpus.config.name);
    Ok(precompute_targets(&corpus.sets, &pairs, config.p, &config.sinkhorn, Exec::default())?)
}

/// Reuse a cached target file when it matches the corpus and settings.
pub fn load_or_compute_targets(
    cached: Option<&Path>,
    corpus: &Corpus,
    config: &TrainConfig,
    run: &mut Run,
) -> Result<TargetCache> {
    let Some(path) = cached else {
        return compute_targets(corpus, config);
    };
    let cache = TargetCache::load(path).with_context(|| format!("loading targets {}", path.display()))?;
    let expected = all_pairs(corpus.len()).len();
    if cache.p != config.p || cache.lambda != config.sinkhorn.lambda || cache.len() != expected {
        bail!(
            "{} holds {} targets for (p={}, lambda={}); corpus needs {expected} for (p={}, lambda={})",
            path.display(),
            cache.len(),
            cache.p,
            cache.lambda,
            config.p,
            config.sinkhorn.lambda
        );
    }
    run.input(path);
    Ok(cache)
}
