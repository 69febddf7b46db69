//! Log-domain Sinkhorn iterations on dual potentials.
//!
//! With `eps = 1/lambda` the entropic plan is
//! `P_ij = exp((f_i + g_j - C_ij) / eps)`. We iterate on the scaled
//! potentials `F = lambda f`, `G = lambda g` so every update is a
//! log-sum-exp over `G_j - lambda C_ij` and nothing is ever exponentiated
//! outside a max-shifted sum.
//!
//! Large `lambda * max(C)` makes plain iterations crawl, so lambda is
//! annealed upward by doubling from a well-conditioned start, warm-starting
//! the potentials at each stage. Every stage shares the `max_iter` budget.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{cost_matrix, CostMatrix, DiscreteMeasure};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornOptions {
    pub lambda: f64,
    pub max_iter: usize,
    /// L-infinity bound on the marginal violation.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self { lambda: 10.0, max_iter: 2000, tol: 1e-6 }
    }
}

impl SinkhornOptions {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornResult {
    /// Transport cost `sum P_ij C_ij` of the entropic plan. Nonnegative, and
    /// strictly positive for two identical non-degenerate sample sets.
    pub distance: f64,
    /// Regularized objective `sum P C + (1/lambda) sum P log P` on the same plan.
    pub objective: f64,
    /// Row-major `rows x cols` coupling.
    pub plan: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute marginal violation of `plan`.
    pub marginal_error: f64,
}

impl SinkhornResult {
    pub fn plan_entry(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for row in self.plan.chunks(self.cols) {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }

    /// Dump the plan as `row,col,value` CSV.
    pub fn write_plan_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,value")?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                writeln!(w, "{i},{j},{:?}", self.plan_entry(i, j))?;
            }
        }
        Ok(())
    }
}

pub fn sinkhorn(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, opts: &SinkhornOptions) -> Result<SinkhornResult> {
    opts.validate()?;
    let cost = cost_matrix(mu, nu, p)?;
    sinkhorn_with_cost(&cost, mu.weights(), nu.weights(), opts)
}

fn log_weight(w: f64) -> f64 {
    if w > 0.0 {
        w.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `log sum_k exp(xs[k] + ys[k])`, with `-inf` terms contributing zero.
#[inline]
fn log_sum_exp_pair(xs: &[f64], ys: &[f64]) -> f64 {
    let mut hi = f64::NEG_INFINITY;
    for (x, y) in xs.iter().zip(ys) {
        hi = hi.max(x + y);
    }
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    let mut s = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        s += (x + y - hi).exp();
    }
    hi + s.ln()
}

pub fn sinkhorn_with_cost(cost: &CostMatrix, a: &[f64], b: &[f64], opts: &SinkhornOptions) -> Result<SinkhornResult> {
    opts.validate()?;
    let (n, m) = (cost.rows(), cost.cols());
    if a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.len() });
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    let lambda = opts.lambda;
    let magnitude = lambda * cost.max();
    if !magnitude.is_finite() || cost.entries().iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteKernel { magnitude });
    }

    let log_a: Vec<f64> = a.iter().map(|&w| log_weight(w)).collect();
    let log_b: Vec<f64> = b.iter().map(|&w| log_weight(w)).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;
    let mut log_k = Vec::new();

    let stages = lambda_schedule(lambda, cost.max());
    for (k, &stage_lambda) in stages.iter().enumerate() {
        let last = k + 1 == stages.len();
        if k > 0 {
            let ratio = stage_lambda / stages[k - 1];
            f.iter_mut().chain(g.iter_mut()).for_each(|v| *v *= ratio);
        }
        log_k = cost.entries().iter().map(|c| -stage_lambda * c).collect();
        let budget = opts.max_iter - iterations;
        let tol = if last { opts.tol } else { opts.tol.max(WARM_TOL) };
        let (used, done) = run_stage(&log_k, n, m, &log_a, &log_b, a, &mut f, &mut g, tol, budget);
        iterations += used;
        converged = last && done;
        if iterations >= opts.max_iter {
            if !last {
                // Out of budget before reaching the target lambda; finish
                // the plan at the target anyway so the result is well defined.
                let ratio = lambda / stage_lambda;
                f.iter_mut().chain(g.iter_mut()).for_each(|v| *v *= ratio);
                log_k = cost.entries().iter().map(|c| -lambda * c).collect();
            }
            break;
        }
    }

    if f.iter().chain(&g).any(|x| x.is_nan()) {
        return Err(Error::NonFiniteKernel { magnitude });
    }

    let mut plan = vec![0.0; n * m];
    let mut distance = 0.0;
    let mut entropy_term = 0.0;
    for i in 0..n {
        for j in 0..m {
            let log_p = f[i] + g[j] + log_k[i * m + j];
            if log_p == f64::NEG_INFINITY {
                continue;
            }
            let pij = log_p.exp();
            plan[i * m + j] = pij;
            distance += pij * cost.get(i, j);
            if pij > 0.0 {
                entropy_term += pij * log_p;
            }
        }
    }
    let mut result = SinkhornResult {
        distance,
        objective: distance + entropy_term / lambda,
        plan,
        rows: n,
        cols: m,
        iterations,
        converged,
        marginal_error: 0.0,
    };
    let rows = result.row_sums();
    let cols = result.col_sums();
    result.marginal_error =
        rows.iter().zip(a).chain(cols.iter().zip(b)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if !converged {
        log::debug!("sinkhorn stopped after {iterations} iterations, marginal error {:e}", result.marginal_error);
    }
    Ok(result)
}

/// Kernel exponent `lambda * max(C)` above which lambda is annealed upward.
const ANNEAL_ABOVE: f64 = 100.0;
/// Marginal tolerance for the intermediate annealing stages.
const WARM_TOL: f64 = 1e-3;

/// Doubling schedule ending at `lambda`, starting where `lambda * max(C)`
/// is at most [`ANNEAL_ABOVE`]. A single stage when no annealing is needed.
fn lambda_schedule(lambda: f64, max_cost: f64) -> Vec<f64> {
    let mut stages = vec![lambda];
    if max_cost > 0.0 {
        let mut l = lambda;
        while l * max_cost > ANNEAL_ABOVE {
            l /= 2.0;
            stages.push(l);
        }
    }
    stages.reverse();
    stages
}

/// Alternating updates at a fixed lambda until the row marginals are within
/// `tol` or `budget` iterations are spent. Returns `(iterations, converged)`.
#[allow(clippy::too_many_arguments)]
fn run_stage(
    log_k: &[f64],
    n: usize,
    m: usize,
    log_a: &[f64],
    log_b: &[f64],
    a: &[f64],
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    budget: usize,
) -> (usize, bool) {
    let mut log_kt = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            log_kt[j * n + i] = log_k[i * m + j];
        }
    }
    let mut s = vec![0.0; n];
    let mut iterations = 0;
    for it in 0..budget {
        iterations = it + 1;
        for i in 0..n {
            s[i] = log_sum_exp_pair(g, &log_k[i * m..(i + 1) * m]);
        }
        // After a g-update columns are exact, so the rows of the current
        // plan, exp(f_i + s_i), carry the whole violation.
        if it > 0 && row_violation(f, &s, a) < tol {
            return (it, true);
        }
        for i in 0..n {
            f[i] = log_a[i] - s[i];
        }
        for j in 0..m {
            g[j] = log_b[j] - log_sum_exp_pair(f, &log_kt[j * n..(j + 1) * n]);
        }
    }
    (iterations, false)
}

fn row_violation(f: &[f64], s: &[f64], a: &[f64]) -> f64 {
    f.iter()
        .zip(s)
        .zip(a)
        .map(|((fi, si), ai)| {
            let r = fi + si;
            let row = if r == f64::NEG_INFINITY { 0.0 } else { r.exp() };
            (row - ai).abs()
        })
        .fold(0.0, f64::max)
}
