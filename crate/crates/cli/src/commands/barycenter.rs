use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;
use wembed::ot::{barycenter, default_grid_1d, BarycenterOptions, BARYCENTER_GRID_POINTS};

use crate::manifest::{digest_of, print_config, Run};
use crate::measures::{read_measure, write_measure_1d};
use crate::{Global, Status};

#[derive(Args)]
pub struct BarycenterArgs {
    /// 1D measure files (CSV).
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Ground cost exponent.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Grid points spanning the inputs with one unit of margin.
    #[arg(long, default_value_t = BARYCENTER_GRID_POINTS)]
    pub grid: usize,
    #[arg(long, default_value_t = 200.0)]
    pub lambda: f64,
    /// Comma-separated simplex weights, one per file; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = BarycenterOptions::default().max_iter)]
    pub max_iter: usize,
    #[arg(long, default_value_t = BarycenterOptions::default().tol)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Effective<'a> {
    files: &'a [PathBuf],
    p: f64,
    grid: usize,
    weights: Vec<f64>,
    options: BarycenterOptions,
}

pub fn run(global: &Global, args: BarycenterArgs) -> Result<Status> {
    let mut run = Run::start("barycenter", global);
    let n = args.files.len();
    let weights = args.weights.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
    if weights.len() != n {
        bail!("{} weights given for {n} files", weights.len());
    }
    let options = BarycenterOptions { lambda: args.lambda, max_iter: args.max_iter, tol: args.tol };
    let effective = Effective { files: &args.files, p: args.p, grid: args.grid, weights, options };
    print_config("barycenter", &effective)?;

    let measures = args.files.iter().map(|f| read_measure(f)).collect::<Result<Vec<_>>>()?;
    for f in &args.files {
        run.input(f);
    }
    let support = default_grid_1d(&measures, args.grid)?;
    let bary = barycenter(&measures, Some(&effective.weights), &support, args.p, &options)?;
    let m = &bary.measure;
    let mode = m.weights().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| m.atom(i)[0]);
    println!("iterations {} converged {}", bary.iterations, bary.converged);
    if let Some(x) = mode {
        println!("mode {x:.6} mean {:.6}", m.mean()[0]);
    }

    let dir = run.out_dir(&args.out)?;
    let path = dir.join("barycenter.csv");
    write_measure_1d(&path, m)?;
    run.output(&path);
    let status = if bary.converged { Status::Complete } else { Status::Partial };
    run.finish(&dir, digest_of(&effective)?, Vec::new(), &status)?;
    Ok(status)
}
