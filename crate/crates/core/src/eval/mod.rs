//! Experiment runners producing [`ExperimentReport`]s and the regularizer
//! ablation table.

mod ablation;
mod experiments;
mod report;
pub mod stats;

pub use ablation::{
    ablation_run, run_ablation, score_model, AblationReport, AblationRow, AblationRun, OutOfSample, ABLATION_TASKS,
};
pub use experiments::{
    circle_fit_eval, embed_measure_centroid, fit_circle, midpoint_ratio, quantile_points, random_scales,
    random_translations, run_barycenter_eval, run_dirac_limit, run_distance_eval, run_moment_eval,
    run_sample_size_sweep, run_scaling_eval, run_translation_eval, BarycenterCase, CircleFit, EvalContext, EvalOptions,
    Split,
};
pub use report::ExperimentReport;
