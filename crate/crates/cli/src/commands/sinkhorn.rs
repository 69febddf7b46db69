use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;
use wembed::ot::{sinkhorn, SinkhornOptions};

use crate::manifest::{digest_of, print_config, Run};
use crate::measures::read_measure;
use crate::{Global, Status};

#[derive(Args)]
pub struct SinkhornArgs {
    /// First measure file (CSV).
    pub a: PathBuf,
    /// Second measure file (CSV).
    pub b: PathBuf,
    /// Ground cost exponent.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = SinkhornOptions::default().lambda)]
    pub lambda: f64,
    /// Marginal violation tolerance.
    #[arg(long, default_value_t = SinkhornOptions::default().tol)]
    pub tol: f64,
    #[arg(long, default_value_t = SinkhornOptions::default().max_iter)]
    pub max_iter: usize,
    /// Directory for the transport plan and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Effective<'a> {
    a: &'a PathBuf,
    b: &'a PathBuf,
    p: f64,
    sinkhorn: SinkhornOptions,
}

pub fn run(global: &Global, args: SinkhornArgs) -> Result<Status> {
    let mut run = Run::start("sinkhorn", global);
    let opts = SinkhornOptions { lambda: args.lambda, tol: args.tol, max_iter: args.max_iter };
    let effective = Effective { a: &args.a, b: &args.b, p: args.p, sinkhorn: opts };
    print_config("sinkhorn", &effective)?;

    let mu = read_measure(&args.a)?;
    let nu = read_measure(&args.b)?;
    run.input(&args.a);
    run.input(&args.b);
    let result = sinkhorn(&mu, &nu, args.p, &opts)?;

    let same = fs::canonicalize(&args.a).ok() == fs::canonicalize(&args.b).ok() || mu == nu;
    if same {
        let msg = "inputs are identical; entropic distances are biased and SD(X, X) > 0";
        eprintln!("warning: {msg}");
        run.notes.push(msg.into());
    }
    println!("distance {:?}", result.distance);
    println!("objective {:?}", result.objective);
    println!(
        "iterations {} converged {} marginal_error {:.3e}",
        result.iterations, result.converged, result.marginal_error
    );
    let status = if result.converged { Status::Complete } else { Status::Partial };
    if let Some(out) = &args.out {
        let dir = run.out_dir(out)?;
        let plan = dir.join("plan.csv");
        result.write_plan_csv(fs::File::create(&plan)?)?;
        run.output(&plan);
        run.finish(&dir, digest_of(&effective)?, Vec::new(), &status)?;
    }
    Ok(status)
}
