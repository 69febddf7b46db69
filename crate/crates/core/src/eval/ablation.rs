use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiments::{
    random_scales, random_translations, run_barycenter_eval, run_distance_eval, run_scaling_eval, run_translation_eval,
    BarycenterCase, EvalContext, EvalOptions, Split,
};
use super::stats::{mean, median, variance};
use crate::dist::SampleSet;
use crate::exec::Exec;
use crate::train::{train, RegMode, TargetCache, TrainConfig, TrainData, TrainOutcome};
use crate::{Error, Result};

/// Table rows. Translation and scaling are pooled over in-sample and
/// out-of-sample sets; barycenter is the mean midpoint ratio.
pub const ABLATION_TASKS: [&str; 5] = ["in_sample", "out_of_sample", "translation", "scaling", "barycenter"];

/// Out-of-sample sets with their targets, used alongside [`TrainData`].
pub struct OutOfSample<'a> {
    pub sets: &'a [SampleSet],
    pub targets: &'a TargetCache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub arm: RegMode,
    pub seed: u64,
    pub in_sample: f64,
    pub out_of_sample: f64,
    pub translation: f64,
    pub scaling: f64,
    pub translation_in: f64,
    pub translation_oos: f64,
    pub scaling_in: f64,
    pub scaling_oos: f64,
    /// 1D models only.
    pub barycenter: Option<f64>,
    pub epochs: usize,
}

impl AblationRun {
    pub fn task(&self, task: &str) -> Option<f64> {
        match task {
            "in_sample" => Some(self.in_sample),
            "out_of_sample" => Some(self.out_of_sample),
            "translation" => Some(self.translation),
            "scaling" => Some(self.scaling),
            "translation_in" => Some(self.translation_in),
            "translation_oos" => Some(self.translation_oos),
            "scaling_in" => Some(self.scaling_in),
            "scaling_oos" => Some(self.scaling_oos),
            "barycenter" => self.barycenter,
            _ => None,
        }
    }
}

/// Table-style scores for one trained model: RMSEs, with translation and
/// scaling also split by sample, plus the mean barycenter midpoint ratio.
pub fn score_model(
    outcome: &TrainOutcome,
    arm: RegMode,
    seed: u64,
    data: &TrainData<'_>,
    oos: &OutOfSample<'_>,
    options: &EvalOptions,
) -> Result<AblationRun> {
    let ctx = EvalContext::new(&outcome.checkpoint.params, options.clone()).with_exec(Exec::Sequential);
    let rmse_of = |r: super::ExperimentReport| r.rmse.ok_or(Error::Empty("ablation scatter"));
    let in_sample = rmse_of(run_distance_eval(&ctx, &data.corpus.sets, data.targets, Split::InSample)?)?;
    let out_of_sample = rmse_of(run_distance_eval(&ctx, oos.sets, oos.targets, Split::OutOfSample)?)?;
    let pooled: Vec<SampleSet> = data.corpus.sets.iter().chain(oos.sets).cloned().collect();
    let dim = data.corpus.dim();
    let ts = random_translations(dim, options.translation_draws, options.translate_range, options.seed);
    let scales = random_scales(options.scale_draws, options.scale_range, options.seed);
    let translation_on = |sets: &[SampleSet]| rmse_of(run_translation_eval(&ctx, sets, &ts)?);
    let scaling_on = |sets: &[SampleSet]| rmse_of(run_scaling_eval(&ctx, sets, &scales)?);
    let barycenter = if dim == 1 {
        let r = run_barycenter_eval(&ctx, &BarycenterCase::standard())?;
        let ratios: Vec<f64> = r.metrics.iter().filter(|(k, _)| k.ends_with("_ratio")).map(|(_, &v)| v).collect();
        Some(mean(&ratios))
    } else {
        None
    };
    Ok(AblationRun {
        arm,
        seed,
        in_sample,
        out_of_sample,
        translation: translation_on(&pooled)?,
        scaling: scaling_on(&pooled)?,
        translation_in: translation_on(&data.corpus.sets)?,
        translation_oos: translation_on(oos.sets)?,
        scaling_in: scaling_on(&data.corpus.sets)?,
        scaling_oos: scaling_on(oos.sets)?,
        barycenter,
        epochs: outcome.checkpoint.epoch,
    })
}

pub fn ablation_run(
    base: &TrainConfig,
    arm: RegMode,
    seed: u64,
    data: &TrainData<'_>,
    oos: &OutOfSample<'_>,
    options: &EvalOptions,
) -> Result<(AblationRun, TrainOutcome)> {
    let config = TrainConfig { regularizer: arm, seed, ..base.clone() };
    let outcome = train(&config, data, None)?;
    let run = score_model(&outcome, arm, seed, data, oos, options)?;
    Ok((run, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub task: String,
    pub arm: RegMode,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub targets_digest: String,
    pub runs: Vec<AblationRun>,
}

impl AblationReport {
    pub fn arm_values(&self, arm: RegMode, task: &str) -> Vec<f64> {
        self.runs.iter().filter(|r| r.arm == arm).filter_map(|r| r.task(task)).collect()
    }

    /// One row per task and arm, `5 x 3` for a complete 1D ablation.
    pub fn rows(&self) -> Vec<AblationRow> {
        let mut rows = Vec::new();
        for task in ABLATION_TASKS {
            for arm in RegMode::ALL {
                let v = self.arm_values(arm, task);
                if v.is_empty() {
                    continue;
                }
                let m = mean(&v);
                let sd = variance(&v).map_or(0.0, f64::sqrt);
                rows.push(AblationRow { task: task.into(), arm, mean: m, sd, median: median(v) });
            }
        }
        rows
    }

    pub fn median(&self, arm: RegMode, task: &str) -> Option<f64> {
        let v = self.arm_values(arm, task);
        (!v.is_empty()).then(|| median(v))
    }

    /// Markdown table: tasks down, arms across, `mean ± sd`.
    pub fn to_markdown(&self) -> String {
        let rows = self.rows();
        let mut out = String::from("| Task |");
        for arm in RegMode::ALL {
            let _ = write!(out, " {} |", arm.name());
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(RegMode::ALL.len()));
        out.push('\n');
        for task in ABLATION_TASKS {
            let _ = write!(out, "| {task} |");
            for arm in RegMode::ALL {
                match rows.iter().find(|r| r.task == task && r.arm == arm) {
                    Some(r) => {
                        let _ = write!(out, " {:.3} ± {:.3} |", r.mean, r.sd);
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            #[serde(flatten)]
            report: &'a AblationReport,
            rows: Vec<AblationRow>,
        }
        Ok(serde_json::to_string_pretty(&Out { report: self, rows: self.rows() })?)
    }
}

/// Trains every arm on every seed with shared targets and scores each model.
pub fn run_ablation(
    base: &TrainConfig,
    data: &TrainData<'_>,
    oos: &OutOfSample<'_>,
    seeds: &[u64],
    options: &EvalOptions,
    exec: Exec,
) -> Result<AblationReport> {
    let jobs: Vec<(RegMode, u64)> = RegMode::ALL.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let runs = exec.try_map(&jobs, |&(arm, seed)| ablation_run(base, arm, seed, data, oos, options).map(|r| r.0))?;
    Ok(AblationReport { targets_digest: data.targets.digest()?, runs })
}
