//! Siamese training of the set encoder against cached Sinkhorn targets.

mod loss;
mod optim;
mod targets;

pub use loss::{build_loss, loss_and_grad, loss_full, loss_wass, LossGraph, LossTerms, PairBatch, RegMode, RegWeights};
pub use optim::{Adam, AdamConfig};
pub use targets::{all_pairs, precompute_targets, Target, TargetCache};

use std::io::Write;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{derive_seed, Corpus, SampleSet};
use crate::eval::stats::{pearson_r, rmse};
use crate::nn::{euclidean, ArchConfig, Checkpoint, EncoderParams, InitMode};
use crate::ot::SinkhornOptions;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to `min_lr` over the configured epochs.
    Cosine {
        min_lr: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub p: f64,
    pub sinkhorn: SinkhornOptions,
    /// Sets per minibatch (`m`).
    pub batch_size: usize,
    /// Pair budget per minibatch; all `C(m, 2)` pairs are used when they fit.
    pub max_pairs: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub regularizer: RegMode,
    pub reg_weights: RegWeights,
    /// `|a| ~ U[lo, hi]` with a random sign.
    pub scale_range: [f64; 2],
    /// `t ~ U[-r, r]^d`.
    pub translate_range: f64,
    pub arch: ArchConfig,
    pub seed: u64,
    /// Stop when held-out r has not improved for this many epochs.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            sinkhorn: SinkhornOptions::default(),
            batch_size: 4,
            max_pairs: 28,
            epochs: 1000,
            learning_rate: 1e-3,
            schedule: LrSchedule::Cosine { min_lr: 1e-5 },
            adam: AdamConfig::default(),
            regularizer: RegMode::Full,
            reg_weights: RegWeights::default(),
            scale_range: [0.5, 2.0],
            translate_range: 3.0,
            arch: ArchConfig::default(),
            seed: 0,
            patience: Some(50),
        }
    }
}

impl TrainConfig {
    /// Smoke-scale settings: 200 epochs.
    pub fn desk(seed: u64) -> Self {
        Self { epochs: 200, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sinkhorn.lambda.is_finite() && self.sinkhorn.lambda > 0.0) {
            return Err(Error::InvalidArgument("lambda must be > 0".into()));
        }
        if self.batch_size < 2 || self.max_pairs == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 2 and max_pairs >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be finite and >= 0".into()));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidArgument("scale_range must satisfy 0 < lo <= hi".into()));
        }
        if !(self.translate_range.is_finite() && self.translate_range >= 0.0) {
            return Err(Error::InvalidArgument("translate_range must be >= 0".into()));
        }
        crate::ot::check_exponent(self.p)?;
        self.arch.validate()
    }

    pub fn digest(&self) -> String {
        crate::digest_bytes(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine { min_lr } => {
                let frac = epoch as f64 / self.epochs.max(1) as f64;
                min_lr + 0.5 * (self.learning_rate - min_lr) * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based, continuing across resumes.
    pub epoch: usize,
    pub loss: f64,
    pub wass: f64,
    pub translation: f64,
    pub scaling: f64,
    pub heldout_r: Option<f64>,
    pub heldout_rmse: Option<f64>,
}

pub fn write_log_csv<W: Write>(log: &[EpochLog], mut w: W) -> Result<()> {
    writeln!(w, "epoch,loss,loss_wass,reg_translation,reg_scaling,heldout_r,heldout_rmse")?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
    for e in log {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{},{}",
            e.epoch,
            e.loss,
            e.wass,
            e.translation,
            e.scaling,
            opt(e.heldout_r),
            opt(e.heldout_rmse)
        )?;
    }
    Ok(())
}

/// Training sets with their cached targets, plus an optional held-out split.
pub struct TrainData<'a> {
    pub corpus: &'a Corpus,
    pub targets: &'a TargetCache,
    pub heldout: Option<(&'a [SampleSet], &'a TargetCache)>,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub excluded_pairs: usize,
    pub stopped_early: bool,
}

/// Refuse corpora that break the training-data policy: eval-only families
/// and repeated draws would both expose `SD(X, X) != 0`.
pub fn check_training_corpus(corpus: &Corpus) -> Result<()> {
    if let Some(s) = corpus.sets.iter().find(|s| s.source.is_eval_only()) {
        return Err(Error::EvalOnlyFamily(s.source.family()));
    }
    if let Some((i, j)) = corpus.duplicate_sets().first() {
        return Err(Error::InvalidArgument(format!("training sets {i} and {j} are identical draws")));
    }
    if corpus.len() < 2 {
        return Err(Error::InvalidArgument("training needs at least two sets".into()));
    }
    Ok(())
}

/// Embedded vs target distance over every converged cached pair of `sets`.
pub fn embedded_vs_target(
    params: &EncoderParams,
    sets: &[SampleSet],
    cache: &TargetCache,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let refs: Vec<&SampleSet> = sets.iter().collect();
    let emb = params.forward(&refs)?;
    let mut embedded = Vec::new();
    let mut target = Vec::new();
    for (&(i, j), t) in cache.iter() {
        if t.converged && i < sets.len() && j < sets.len() {
            embedded.push(euclidean(emb.row_slice(i), emb.row_slice(j)));
            target.push(t.distance);
        }
    }
    Ok((embedded, target))
}

/// Pairs of the minibatch `chunk` (corpus indices) that have usable targets.
fn batch_pairs(chunk: &[usize], targets: &TargetCache, max_pairs: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for a in 0..chunk.len() {
        for b in a + 1..chunk.len() {
            if targets.distance(chunk[a], chunk[b]).is_some() {
                pairs.push((a, b));
            }
        }
    }
    if pairs.len() > max_pairs {
        let mut keep = index::sample(rng, pairs.len(), max_pairs).into_vec();
        keep.sort_unstable();
        pairs = keep.into_iter().map(|k| pairs[k]).collect();
    }
    pairs
}

pub fn train(config: &TrainConfig, data: &TrainData<'_>, resume: Option<Checkpoint>) -> Result<TrainOutcome> {
    config.validate()?;
    check_training_corpus(data.corpus)?;
    if data.targets.p != config.p || data.targets.lambda != config.sinkhorn.lambda {
        return Err(Error::InvalidArgument(format!(
            "target cache is for (p={}, lambda={}), config wants (p={}, lambda={})",
            data.targets.p, data.targets.lambda, config.p, config.sinkhorn.lambda
        )));
    }
    let dim = data.corpus.dim();
    let arch = config.arch.clone().with_input_dim(dim);
    let (mut params, mut adam, start_epoch) = match resume {
        Some(ck) => {
            if ck.params.arch != arch {
                return Err(Error::InvalidArgument("checkpoint architecture differs from config".into()));
            }
            let adam = match ck.optimizer {
                Some(state) => Adam::resume(config.adam, state),
                None => Adam::new(config.adam, &ck.params),
            };
            (ck.params, adam, ck.epoch)
        }
        None => {
            let params = EncoderParams::init(&arch, derive_seed(config.seed, &[0x1417]), InitMode::Xavier)?;
            let adam = Adam::new(config.adam, &params);
            (params, adam, 0)
        }
    };

    let n = data.corpus.len();
    let excluded_pairs = data.targets.non_converged();
    if excluded_pairs > 0 {
        log::warn!("training without {excluded_pairs} non-converged target pairs");
    }
    let mut log = Vec::new();
    let mut best_r = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in start_epoch..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0xE90C, epoch as u64]));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let lr = config.lr_at(epoch);
        let mut sums = LossTerms::default();
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let pairs = batch_pairs(chunk, data.targets, config.max_pairs, &mut rng);
            // Transform draws happen for every chunk so the stream does not
            // depend on which chunks end up skipped.
            let a_abs = rng.random_range(config.scale_range[0]..=config.scale_range[1]);
            let a = if rng.random::<bool>() { a_abs } else { -a_abs };
            let t: Vec<f64> =
                (0..dim).map(|_| rng.random_range(-config.translate_range..=config.translate_range)).collect();
            if pairs.is_empty() {
                continue;
            }
            let targets: Vec<f64> =
                pairs.iter().map(|&(i, j)| data.targets.distance(chunk[i], chunk[j]).expect("filtered")).collect();
            let sets: Vec<SampleSet> = chunk.iter().map(|&k| data.corpus.sets[k].clone()).collect();
            let mut batch = PairBatch::new(sets, pairs, targets)?;
            if config.regularizer.uses_translation() {
                batch = batch.with_translation(&t)?;
            }
            if config.regularizer.uses_scaling() {
                batch = batch.with_scaling(a)?;
            }
            let (terms, grads) = loss_and_grad(&params, &batch, config.regularizer, config.reg_weights)?;
            adam.step(&mut params, &grads, lr);
            sums.total += terms.total;
            sums.wass += terms.wass;
            sums.translation += terms.translation;
            sums.scaling += terms.scaling;
            batches += 1;
        }
        if !params.is_finite() {
            return Err(Error::InvalidArgument(format!("parameters diverged at epoch {}", epoch + 1)));
        }
        let denom = batches.max(1) as f64;
        let (heldout_r, heldout_rmse) = match data.heldout {
            Some((sets, cache)) => {
                let (e, t) = embedded_vs_target(&params, sets, cache)?;
                (pearson_r(&e, &t).ok(), rmse(&e, &t).ok())
            }
            None => (None, None),
        };
        log.push(EpochLog {
            epoch: epoch + 1,
            loss: sums.total / denom,
            wass: sums.wass / denom,
            translation: sums.translation / denom,
            scaling: sums.scaling / denom,
            heldout_r,
            heldout_rmse,
        });
        log::debug!("epoch {} loss {:.5} heldout r {:?}", epoch + 1, sums.total / denom, heldout_r);
        if let (Some(r), Some(patience)) = (heldout_r, config.patience) {
            if r > best_r + 1e-6 {
                best_r = r;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let epoch = log.last().map_or(start_epoch, |e| e.epoch);
    let checkpoint = Checkpoint {
        params,
        seed: config.seed,
        config_digest: config.digest(),
        epoch,
        optimizer: Some(adam.state().clone()),
    };
    Ok(TrainOutcome { checkpoint, log, excluded_pairs, stopped_early })
}
