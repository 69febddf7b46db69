use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::ExperimentReport;
use super::stats::{mean, median, pearson_r, variance};
use crate::dist::{circle_translations, derive_seed, sample, DistributionSpec, SampleSet};
use crate::exec::Exec;
use crate::nn::{euclidean, EncoderParams};
use crate::ot::{barycenter, default_grid_1d, sinkhorn, BarycenterOptions, DiscreteMeasure, SinkhornOptions};
use crate::train::{embedded_vs_target, TargetCache};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub p: f64,
    pub sinkhorn: SinkhornOptions,
    pub seed: u64,
    /// Points per generated probe set.
    pub sample_size: usize,
    pub translation_draws: usize,
    pub translate_range: f64,
    pub scale_draws: usize,
    pub scale_range: [f64; 2],
    pub circle_points: usize,
    pub dirac_steps: usize,
    pub barycenter_p: f64,
    pub barycenter: BarycenterOptions,
    pub barycenter_grid: usize,
    pub sweep_sizes: Vec<usize>,
    pub sweep_repetitions: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            p: 1.0,
            sinkhorn: SinkhornOptions::default(),
            seed: 0,
            sample_size: 100,
            translation_draws: 8,
            translate_range: 3.0,
            scale_draws: 8,
            scale_range: [0.5, 2.0],
            circle_points: 16,
            dirac_steps: 7,
            barycenter_p: 2.0,
            barycenter: BarycenterOptions { lambda: 200.0, ..BarycenterOptions::default() },
            barycenter_grid: crate::ot::BARYCENTER_GRID_POINTS,
            sweep_sizes: vec![25, 50, 100, 250, 500],
            sweep_repetitions: 10,
        }
    }
}

/// A trained encoder plus evaluation settings.
pub struct EvalContext<'a> {
    pub params: &'a EncoderParams,
    pub options: EvalOptions,
    pub exec: Exec,
}

impl<'a> EvalContext<'a> {
    pub fn new(params: &'a EncoderParams, options: EvalOptions) -> Self {
        Self { params, options, exec: Exec::default() }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Digest of the weights and the evaluation settings.
    pub fn digest(&self) -> String {
        let mut bytes = serde_json::to_vec(self.params).expect("params serialize");
        bytes.extend(serde_json::to_vec(&self.options).expect("options serialize"));
        crate::digest_bytes(&bytes)
    }

    fn report(&self, name: &str) -> ExperimentReport {
        ExperimentReport::new(name, self.options.seed, self.digest())
    }

    fn seed(&self, tag: u64) -> u64 {
        derive_seed(self.options.seed, &[tag])
    }

    fn embed(&self, sets: &[SampleSet]) -> Result<Vec<Vec<f64>>> {
        self.params.encode_batch(sets, self.exec)
    }

    fn dirac_set(&self, location: f64) -> Result<SampleSet> {
        sample(&DistributionSpec::dirac_1d(location), self.options.sample_size, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    InSample,
    OutOfSample,
}

impl Split {
    pub fn report_name(self) -> &'static str {
        match self {
            Split::InSample => "distance_in",
            Split::OutOfSample => "distance_oos",
        }
    }
}

/// Embedded vs Sinkhorn distance over every converged cached pair.
pub fn run_distance_eval(
    ctx: &EvalContext<'_>,
    sets: &[SampleSet],
    cache: &TargetCache,
    split: Split,
) -> Result<ExperimentReport> {
    let (e, t) = embedded_vs_target(ctx.params, sets, cache)?;
    let mut report = ctx.report(split.report_name()).with_records(e.into_iter().zip(t).collect());
    report.set_metric("excluded_pairs", cache.non_converged() as f64);
    if ctx.params.arch.input_dim == 1 {
        let h = ctx.embed(&[ctx.dirac_set(0.0)?, ctx.dirac_set(1.0)?])?;
        report.set_metric("dirac_pair_embedded", euclidean(&h[0], &h[1]));
    }
    Ok(report)
}

/// `count` vectors drawn from `U[-range, range]^dim`.
pub fn random_translations(dim: usize, count: usize, range: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.random_range(-range..=range)).collect()).collect()
}

/// `count` factors with `|a| ~ U[lo, hi]` and a random sign.
pub fn random_scales(count: usize, range: [f64; 2], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = rng.random_range(range[0]..=range[1]);
            if rng.random::<bool>() {
                a
            } else {
                -a
            }
        })
        .collect()
}

fn all_index_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Records `(|H(X+t) - H(Y+t)|, |H(X) - H(Y)|)` and the parallelogram
/// residual `|(H(X+t) - H(X)) - (H(Y+t) - H(Y))|` relative to `|H(X) - H(Y)|`.
pub fn run_translation_eval(
    ctx: &EvalContext<'_>,
    sets: &[SampleSet],
    translations: &[Vec<f64>],
) -> Result<ExperimentReport> {
    if translations.is_empty() {
        return Err(Error::Empty("translation draws"));
    }
    let base = ctx.embed(sets)?;
    let mut records = Vec::new();
    let mut ratios = Vec::new();
    for t in translations {
        let moved_sets = sets.iter().map(|s| s.translate(t)).collect::<Result<Vec<_>>>()?;
        let moved = ctx.embed(&moved_sets)?;
        for (i, j) in all_index_pairs(sets.len()) {
            let d = euclidean(&base[i], &base[j]);
            records.push((euclidean(&moved[i], &moved[j]), d));
            let shift: Vec<f64> =
                (0..base[i].len()).map(|k| (moved[i][k] - base[i][k]) - (moved[j][k] - base[j][k])).collect();
            let resid = shift.iter().map(|v| v * v).sum::<f64>().sqrt();
            if d > 0.0 {
                ratios.push(resid / d);
            }
        }
    }
    let mut report = ctx.report("translation").with_records(records);
    if !ratios.is_empty() {
        report.set_metric("parallelogram_median_ratio", median(ratios));
    }
    report.set_metric("draws", translations.len() as f64);
    match sets.first() {
        Some(s) if s.dim == 2 => {
            let fit = circle_fit_eval(ctx, s)?;
            report.set_metric("circle_radius", fit.radius);
            report.set_metric("circle_residual", fit.residual);
            report.series.insert("circle_x".into(), fit.points.iter().map(|p| p[0]).collect());
            report.series.insert("circle_y".into(), fit.points.iter().map(|p| p[1]).collect());
        }
        _ => report.notes.push("circle fit needs 2D sets; skipped".into()),
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    /// RMS of `|p - center| - radius`, divided by `radius`.
    pub residual: f64,
    pub points: Vec<Vec<f64>>,
}

/// Algebraic least-squares circle through 2D points.
pub fn fit_circle(points: &[[f64; 2]]) -> Result<([f64; 2], f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument("circle fit needs three points".into()));
    }
    // Minimize sum (x^2 + y^2 + D x + E y + F)^2.
    let mut a = [[0.0f64; 4]; 3];
    for &[x, y] in points {
        let row = [x, y, 1.0];
        let rhs = -(x * x + y * y);
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += row[r] * row[c];
            }
            a[r][3] += row[r] * rhs;
        }
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::InvalidArgument("collinear points".into()));
        }
        a.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                let pivot_row = a[col];
                for (x, p) in a[r].iter_mut().zip(pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    let (d, e, f) = (a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]);
    let center = [-d / 2.0, -e / 2.0];
    let r2 = center[0] * center[0] + center[1] * center[1] - f;
    if r2.is_nan() || r2 <= 0.0 {
        return Err(Error::InvalidArgument("degenerate circle".into()));
    }
    let radius = r2.sqrt();
    let ms = points.iter().map(|p| ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).powi(2)).sum::<f64>()
        / points.len() as f64;
    Ok((center, radius, ms.sqrt() / radius))
}

/// Embed a 2D set translated around the unit circle and fit a circle to the
/// first two embedding axes.
pub fn circle_fit_eval(ctx: &EvalContext<'_>, set: &SampleSet) -> Result<CircleFit> {
    let moved = circle_translations(set, ctx.options.circle_points)?;
    let points = ctx.embed(&moved)?;
    if points[0].len() < 2 {
        return Err(Error::InvalidArgument("circle fit needs a 2D embedding".into()));
    }
    let xy: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    let (center, radius, residual) = fit_circle(&xy)?;
    Ok(CircleFit { center, radius, residual, points })
}

/// Records `(|H(aX) - H(aY)|, |a| |H(X) - H(Y)|)`.
pub fn run_scaling_eval(ctx: &EvalContext<'_>, sets: &[SampleSet], scales: &[f64]) -> Result<ExperimentReport> {
    if scales.is_empty() {
        return Err(Error::Empty("scale draws"));
    }
    let base = ctx.embed(sets)?;
    let mut records = Vec::new();
    for &a in scales {
        let scaled_sets = sets.iter().map(|s| s.scale(a)).collect::<Result<Vec<_>>>()?;
        let scaled = ctx.embed(&scaled_sets)?;
        for (i, j) in all_index_pairs(sets.len()) {
            records.push((euclidean(&scaled[i], &scaled[j]), a.abs() * euclidean(&base[i], &base[j])));
        }
    }
    let mut report = ctx.report("scaling").with_records(records);
    report.set_metric("draws", scales.len() as f64);
    Ok(report)
}

/// Best `|r|` between any embedding axis and the per-set sample mean and
/// standard deviation (first coordinate).
pub fn run_moment_eval(ctx: &EvalContext<'_>, sets: &[SampleSet]) -> Result<ExperimentReport> {
    let emb = ctx.embed(sets)?;
    let means: Vec<f64> = sets.iter().map(|s| s.mean()[0]).collect();
    let sds: Vec<f64> = sets.iter().map(|s| s.sd()[0]).collect();
    let k = emb.first().map_or(0, Vec::len);
    let mut report = ctx.report("moments");
    for (name, moment) in [("mean", &means), ("sd", &sds)] {
        let mut best = (f64::NEG_INFINITY, 0usize, 0.0);
        for axis in 0..k {
            let col: Vec<f64> = emb.iter().map(|e| e[axis]).collect();
            let r = pearson_r(&col, moment)?;
            if r.abs() > best.0 {
                best = (r.abs(), axis, r);
            }
        }
        report.set_metric(format!("{name}_abs_r"), best.0);
        report.set_metric(format!("{name}_axis"), best.1 as f64);
        report.set_metric(format!("{name}_signed_r"), best.2);
    }
    Ok(report)
}

/// `|H(N(0, sigma^2)) - H(delta_0)|` for `sigma = 1, 1/2, ..., 2^-(steps-1)`.
pub fn run_dirac_limit(ctx: &EvalContext<'_>) -> Result<ExperimentReport> {
    let steps = ctx.options.dirac_steps;
    if steps == 0 {
        return Err(Error::Empty("sigma sequence"));
    }
    let sigmas: Vec<f64> = (0..steps).map(|k| 0.5f64.powi(k as i32)).collect();
    let seed = ctx.seed(0xD1AC);
    let mut sets = sigmas
        .iter()
        .map(|&sd| sample(&DistributionSpec::normal(0.0, sd), ctx.options.sample_size, seed))
        .collect::<Result<Vec<_>>>()?;
    sets.push(ctx.dirac_set(0.0)?);
    let emb = ctx.embed(&sets)?;
    let dirac = &emb[steps];
    let distances: Vec<f64> = emb[..steps].iter().map(|e| euclidean(e, dirac)).collect();
    let inversions = distances.windows(2).filter(|w| w[1] > w[0]).count();
    let worst_inversion =
        distances.windows(2).filter(|w| w[0] > 0.0).map(|w| (w[1] - w[0]) / w[0]).fold(0.0f64, f64::max);
    let mut report = ctx.report("dirac_limit");
    report.set_metric("first", distances[0]);
    report.set_metric("last", distances[steps - 1]);
    report.set_metric("end_to_start", if distances[0] > 0.0 { distances[steps - 1] / distances[0] } else { 0.0 });
    report.set_metric("inversions", inversions as f64);
    report.set_metric("worst_inversion_ratio", worst_inversion);
    report.series.insert("sigma".into(), sigmas);
    report.series.insert("distance".into(), distances);
    Ok(report)
}

/// `n` points at the `(k + 1/2) / n` quantiles of a weighted 1D measure.
pub fn quantile_points(measure: &DiscreteMeasure, n: usize) -> Result<SampleSet> {
    if measure.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: measure.dim() });
    }
    if n == 0 {
        return Err(Error::Empty("quantile sample"));
    }
    let mut order: Vec<usize> = (0..measure.len()).collect();
    order.sort_by(|&a, &b| measure.atom(a)[0].total_cmp(&measure.atom(b)[0]));
    let mut points = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut idx = 0;
    for k in 0..n {
        let q = (k as f64 + 0.5) / n as f64;
        while idx + 1 < order.len() && cum + measure.weights()[order[idx]] < q {
            cum += measure.weights()[order[idx]];
            idx += 1;
        }
        points.push(measure.atom(order[idx])[0]);
    }
    SampleSet::from_points(1, points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarycenterCase {
    pub name: String,
    pub first: DistributionSpec,
    pub second: DistributionSpec,
}

impl BarycenterCase {
    pub fn new(name: &str, first: DistributionSpec, second: DistributionSpec) -> Self {
        Self { name: name.into(), first, second }
    }

    /// Normal pair, Dirac pair and uniform pair.
    pub fn standard() -> Vec<Self> {
        vec![
            Self::new("normal", DistributionSpec::normal(0.0, 0.1), DistributionSpec::normal(1.0, 0.1)),
            Self::new("dirac", DistributionSpec::dirac_1d(0.0), DistributionSpec::dirac_1d(1.0)),
            Self::new("uniform", DistributionSpec::uniform(0.0, 0.1), DistributionSpec::uniform(0.8, 0.9)),
        ]
    }
}

/// Distance from the embedded barycenter to the midpoint of the two embedded
/// inputs, over the distance between the inputs.
pub fn midpoint_ratio(h1: &[f64], h2: &[f64], hb: &[f64]) -> f64 {
    let span = euclidean(h1, h2);
    let mid: Vec<f64> = h1.iter().zip(h2).map(|(a, b)| 0.5 * (a + b)).collect();
    let off = euclidean(hb, &mid);
    if span == 0.0 {
        if off == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        off / span
    }
}

pub fn run_barycenter_eval(ctx: &EvalContext<'_>, cases: &[BarycenterCase]) -> Result<ExperimentReport> {
    let o = &ctx.options;
    let mut report = ctx.report("barycenter");
    for (c, case) in cases.iter().enumerate() {
        let s1 = sample(&case.first, o.sample_size, ctx.seed(2 * c as u64 + 0xBA00))?;
        let s2 = sample(&case.second, o.sample_size, ctx.seed(2 * c as u64 + 0xBA01))?;
        let (m1, m2) = (s1.to_measure()?, s2.to_measure()?);
        let grid = default_grid_1d(&[m1.clone(), m2.clone()], o.barycenter_grid)?;
        let bary = barycenter(&[m1, m2], None, &grid, o.barycenter_p, &o.barycenter)?;
        if !bary.converged {
            report.notes.push(format!("{}: barycenter did not converge", case.name));
        }
        let sb = quantile_points(&bary.measure, o.sample_size)?;
        let emb = ctx.embed(&[s1, s2, sb])?;
        let span = euclidean(&emb[0], &emb[1]);
        let ratio = midpoint_ratio(&emb[0], &emb[1], &emb[2]);
        if span == 0.0 {
            report.notes.push(format!("{}: inputs embed to the same point", case.name));
        }
        report.set_metric(format!("{}_ratio", case.name), ratio);
        report.set_metric(format!("{}_mean", case.name), bary.measure.mean()[0]);
        report.series.insert(format!("{}_grid", case.name), bary.measure.atoms().to_vec());
        report.series.insert(format!("{}_weights", case.name), bary.measure.weights().to_vec());
    }
    Ok(report)
}

/// For each size, `repetitions` fresh draws of the pair; reports the
/// variance of `|H(X) - H(Y)| - SD(X, Y)` per size.
pub fn run_sample_size_sweep(
    ctx: &EvalContext<'_>,
    first: &DistributionSpec,
    second: &DistributionSpec,
) -> Result<ExperimentReport> {
    let o = &ctx.options;
    if o.sweep_sizes.is_empty() {
        return Err(Error::Empty("sweep sizes"));
    }
    let jobs: Vec<(usize, usize)> =
        o.sweep_sizes.iter().flat_map(|&n| (0..o.sweep_repetitions).map(move |r| (n, r))).collect();
    let results = ctx.exec.try_map(&jobs, |&(n, r)| -> Result<(f64, f64)> {
        let sx = sample(first, n, ctx.seed(derive_seed(n as u64, &[r as u64, 0])))?;
        let sy = sample(second, n, ctx.seed(derive_seed(n as u64, &[r as u64, 1])))?;
        let sd = sinkhorn(&sx.to_measure()?, &sy.to_measure()?, o.p, &o.sinkhorn)?.distance;
        let emb = ctx.params.forward(&[&sx, &sy])?;
        Ok((euclidean(emb.row_slice(0), emb.row_slice(1)), sd))
    })?;
    let mut report = ctx.report("sample_size").with_records(results.clone());
    let mut variances = Vec::new();
    for (k, &n) in o.sweep_sizes.iter().enumerate() {
        let errs: Vec<f64> =
            results[k * o.sweep_repetitions..(k + 1) * o.sweep_repetitions].iter().map(|(e, t)| e - t).collect();
        let v = if errs.len() > 1 { variance(&errs)? } else { 0.0 };
        report.set_metric(format!("variance_n{n}"), v);
        report.set_metric(format!("mean_error_n{n}"), mean(&errs));
        variances.push(v);
    }
    report.series.insert("size".into(), o.sweep_sizes.iter().map(|&n| n as f64).collect());
    report.series.insert("variance".into(), variances);
    Ok(report)
}

/// Centroid of the encodings of `m` independent `n`-point draws.
pub fn embed_measure_centroid(
    params: &EncoderParams,
    spec: &DistributionSpec,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Empty("centroid draws"));
    }
    let sets = (0..m).map(|k| sample(spec, n, derive_seed(seed, &[k as u64]))).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&SampleSet> = sets.iter().collect();
    let emb = params.forward(&refs)?;
    let k = emb.cols();
    Ok((0..k).map(|c| (0..m).map(|r| emb.get(r, c)).sum::<f64>() / m as f64).collect())
}
