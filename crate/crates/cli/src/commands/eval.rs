use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use wembed::dist::{Corpus, DistributionSpec, SampleSet};
use wembed::eval::{
    random_scales, random_translations, run_ablation, run_barycenter_eval, run_dirac_limit, run_distance_eval,
    run_moment_eval, run_sample_size_sweep, run_scaling_eval, run_translation_eval, BarycenterCase, EvalContext,
    ExperimentReport, OutOfSample, Split,
};
use wembed::nn::Checkpoint;
use wembed::train::{TargetCache, TrainData};
use wembed::Exec;

use super::{compute_targets, load_or_compute_targets, CorpusSource, Job, ROLE_HELDOUT, ROLE_OOS, ROLE_TRAIN};
use crate::manifest::{digest_of, print_config, Run};
use crate::{Global, Status};

pub const EXPERIMENTS: [&str; 8] =
    ["distance_in", "distance_oos", "translation", "scaling", "moments", "dirac_limit", "barycenter", "sample_size"];

#[derive(Args)]
pub struct EvalArgs {
    /// Trained weights; not needed for `ablation`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Job file (JSON); built-in desk defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// In-sample corpus file, overriding the job file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Out-of-sample corpus file, overriding the job file.
    #[arg(long)]
    pub oos: Option<PathBuf>,
    /// Cached in-sample targets (e.g. from `train`).
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// One of the experiment names, `all`, or `ablation`.
    #[arg(long, default_value = "all")]
    pub experiment: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn selected(name: &str) -> Result<Vec<&'static str>> {
    match name {
        "all" => Ok(EXPERIMENTS.to_vec()),
        "ablation" => Ok(vec!["ablation"]),
        other => EXPERIMENTS.iter().find(|&&e| e == other).map(|&e| vec![e]).ok_or_else(|| {
            anyhow!("unknown experiment {other:?}; valid names: {}, all, ablation", EXPERIMENTS.join(", "))
        }),
    }
}

struct Inputs {
    corpus: Corpus,
    targets: Option<TargetCache>,
    oos: Option<(Corpus, TargetCache)>,
}

pub fn run(global: &Global, args: EvalArgs) -> Result<Status> {
    let experiments = selected(&args.experiment)?;
    let mut run = Run::start("eval", global);
    let (mut job, base) = Job::resolve(args.config.as_deref(), args.seed)?;
    if let Some(path) = &args.config {
        run.input(path);
    }
    if let Some(c) = &args.corpus {
        job.corpus = CorpusSource::File { file: c.clone() };
    }
    if let Some(o) = &args.oos {
        job.out_of_sample = Some(CorpusSource::File { file: o.clone() });
    }
    // Eval targets use the training settings so cached files line up.
    job.eval.p = job.train.p;
    job.eval.sinkhorn = job.train.sinkhorn;
    print_config("eval", &job)?;
    let dir = run.out_dir(&args.out)?;

    if experiments == ["ablation"] {
        return ablation(run, &job, &base, args.targets.as_deref(), dir);
    }

    let ck_path =
        args.checkpoint.as_ref().ok_or_else(|| anyhow!("--checkpoint is required for {}", args.experiment))?;
    let checkpoint = Checkpoint::load(ck_path).with_context(|| format!("loading checkpoint {}", ck_path.display()))?;
    run.input(ck_path);

    let corpus = job.corpus.load(job.seed, ROLE_TRAIN, &base, &mut run)?;
    if corpus.dim() != checkpoint.params.arch.input_dim {
        bail!("corpus is {}-dimensional, checkpoint expects {}", corpus.dim(), checkpoint.params.arch.input_dim);
    }
    let needs = |e: &str| experiments.contains(&e);
    let targets = if needs("distance_in") {
        Some(load_or_compute_targets(args.targets.as_deref(), &corpus, &job.train, &mut run)?)
    } else {
        None
    };
    let oos = match &job.out_of_sample {
        Some(src) => {
            let c = src.load(job.seed, ROLE_OOS, &base, &mut run)?;
            let t = if needs("distance_oos") {
                compute_targets(&c, &job.train)?
            } else {
                TargetCache::new(job.train.p, job.train.sinkhorn.lambda)
            };
            Some((c, t))
        }
        None if needs("distance_oos") => bail!("distance_oos needs an out_of_sample corpus"),
        None => None,
    };
    let inputs = Inputs { corpus, targets, oos };

    let ctx = EvalContext::new(&checkpoint.params, job.eval.clone());
    let mut partial = false;
    for name in &experiments {
        let report = match one(&ctx, name, &inputs) {
            Ok(r) => r,
            Err(e) => {
                log::error!("{name}: {e:#}");
                run.notes.push(format!("{name} failed: {e:#}"));
                partial = true;
                continue;
            }
        };
        println!(
            "{:<13} r {:>8} rmse {:>8} n {}",
            report.name,
            report.pearson_r.map_or("-".into(), |v| format!("{v:.4}")),
            report.rmse.map_or("-".into(), |v| format!("{v:.4}")),
            report.record_count
        );
        let (json, csv) = report.save(&dir)?;
        run.output(json);
        run.output(csv);
    }
    let status = if partial { Status::Partial } else { Status::Complete };
    run.finish(&dir, ctx.digest(), vec![job.seed], &status)?;
    Ok(status)
}

fn pooled(inputs: &Inputs) -> Vec<SampleSet> {
    let oos = inputs.oos.iter().flat_map(|(c, _)| c.sets.iter());
    inputs.corpus.sets.iter().chain(oos).cloned().collect()
}

fn one(ctx: &EvalContext<'_>, name: &str, inputs: &Inputs) -> Result<ExperimentReport> {
    let o = &ctx.options;
    let dim = inputs.corpus.dim();
    let one_d = || if dim == 1 { Ok(()) } else { Err(anyhow!("{name} runs on 1D encoders only")) };
    Ok(match name {
        "distance_in" => {
            let t = inputs.targets.as_ref().expect("targets loaded");
            run_distance_eval(ctx, &inputs.corpus.sets, t, Split::InSample)?
        }
        "distance_oos" => {
            let (c, t) = inputs.oos.as_ref().expect("oos loaded");
            run_distance_eval(ctx, &c.sets, t, Split::OutOfSample)?
        }
        "translation" => {
            let ts = random_translations(dim, o.translation_draws, o.translate_range, o.seed);
            run_translation_eval(ctx, &pooled(inputs), &ts)?
        }
        "scaling" => run_scaling_eval(ctx, &pooled(inputs), &random_scales(o.scale_draws, o.scale_range, o.seed))?,
        "moments" => run_moment_eval(ctx, &pooled(inputs))?,
        "dirac_limit" => {
            one_d()?;
            run_dirac_limit(ctx)?
        }
        "barycenter" => {
            one_d()?;
            run_barycenter_eval(ctx, &BarycenterCase::standard())?
        }
        "sample_size" => {
            one_d()?;
            run_sample_size_sweep(ctx, &DistributionSpec::normal(0.0, 1.0), &DistributionSpec::normal(1.0, 0.5))?
        }
        other => bail!("unknown experiment {other:?}"),
    })
}

fn ablation(
    mut run: Run,
    job: &Job,
    base: &std::path::Path,
    cached: Option<&std::path::Path>,
    dir: PathBuf,
) -> Result<Status> {
    let corpus = job.corpus.load(job.seed, ROLE_TRAIN, base, &mut run)?;
    let targets = load_or_compute_targets(cached, &corpus, &job.train, &mut run)?;
    let heldout = match &job.heldout {
        Some(src) => {
            let h = src.load(job.seed, ROLE_HELDOUT, base, &mut run)?;
            let t = compute_targets(&h, &job.train)?;
            Some((h, t))
        }
        None => None,
    };
    let oos_src = job.out_of_sample.as_ref().ok_or_else(|| anyhow!("ablation needs an out_of_sample corpus"))?;
    let oos_corpus = oos_src.load(job.seed, ROLE_OOS, base, &mut run)?;
    let oos_targets = compute_targets(&oos_corpus, &job.train)?;
    let data = TrainData {
        corpus: &corpus,
        targets: &targets,
        heldout: heldout.as_ref().map(|(h, t)| (h.sets.as_slice(), t)),
    };
    let oos = OutOfSample { sets: &oos_corpus.sets, targets: &oos_targets };
    log::info!("ablation: 3 arms x {} seeds", job.ablation_seeds.len());
    let report = run_ablation(&job.train, &data, &oos, &job.ablation_seeds, &job.eval, Exec::default())?;
    let md = report.to_markdown();
    println!("{md}");
    let json_path = dir.join("ablation.json");
    let md_path = dir.join("ablation.md");
    fs::write(&json_path, report.to_json()?)?;
    fs::write(&md_path, md)?;
    run.output(&json_path);
    run.output(&md_path);
    let status = Status::Complete;
    run.finish(&dir, digest_of(job)?, job.ablation_seeds.clone(), &status)?;
    Ok(status)
}
