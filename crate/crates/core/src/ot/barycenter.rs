//! Fixed-support entropic Wasserstein barycenters by iterated Bregman
//! projections, carried out on log-scalings.

use serde::{Deserialize, Serialize};

use super::{cost_matrix, DiscreteMeasure, SIMPLEX_TOL};
use crate::{Error, Result};

pub const BARYCENTER_GRID_POINTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarycenterOptions {
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the barycenter weights move less than this (L-infinity).
    pub tol: f64,
}

impl Default for BarycenterOptions {
    fn default() -> Self {
        Self { lambda: 10.0, max_iter: 5000, tol: 1e-9 }
    }
}

/// Evenly spaced 1D grid over `[min - 1, max + 1]` of every input atom.
pub fn default_grid_1d(measures: &[DiscreteMeasure], points: usize) -> Result<DiscreteMeasure> {
    if measures.is_empty() {
        return Err(Error::Empty("barycenter input measures"));
    }
    if points < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    if measures.iter().any(|m| m.dim() != 1) {
        return Err(Error::InvalidMeasure("default grid is 1D only".into()));
    }
    let (lo, hi) = measures
        .iter()
        .map(DiscreteMeasure::bounds)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)));
    let (lo, hi) = (lo - 1.0, hi + 1.0);
    let step = (hi - lo) / (points - 1) as f64;
    let atoms = (0..points).map(|k| lo + step * k as f64).collect();
    DiscreteMeasure::uniform(1, atoms)
}

#[derive(Clone, Debug)]
pub struct Barycenter {
    pub measure: DiscreteMeasure,
    pub iterations: usize,
    pub converged: bool,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// Weights on `support`'s atoms minimizing `sum_k w_k SD(q, mu_k)` with
/// `p`-th power ground costs.
pub fn barycenter(
    measures: &[DiscreteMeasure],
    weights: Option<&[f64]>,
    support: &DiscreteMeasure,
    p: f64,
    opts: &BarycenterOptions,
) -> Result<Barycenter> {
    if measures.is_empty() {
        return Err(Error::Empty("barycenter input measures"));
    }
    let uniform = vec![1.0 / measures.len() as f64; measures.len()];
    let w = weights.unwrap_or(&uniform);
    if w.len() != measures.len() {
        return Err(Error::DimensionMismatch { expected: measures.len(), got: w.len() });
    }
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidArgument("barycenter weights must lie on the simplex".into()));
    }
    if !(opts.lambda.is_finite() && opts.lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", opts.lambda)));
    }

    let g = support.len();
    // log K_k, stored support-major (g x n_k) so both projections stream rows.
    let mut log_k = Vec::with_capacity(measures.len());
    for mu in measures {
        let c = cost_matrix(mu, support, p)?;
        let n = mu.len();
        let mut lk = vec![0.0; g * n];
        for i in 0..n {
            for j in 0..g {
                lk[j * n + i] = -opts.lambda * c.get(i, j);
            }
        }
        if lk.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteKernel { magnitude: opts.lambda * c.max() });
        }
        log_k.push(lk);
    }
    let log_a: Vec<Vec<f64>> = measures
        .iter()
        .map(|m| m.weights().iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect())
        .collect();

    let mut log_v: Vec<Vec<f64>> = measures.iter().map(|_| vec![0.0; g]).collect();
    let mut log_u: Vec<Vec<f64>> = measures.iter().map(|m| vec![0.0; m.len()]).collect();
    let mut q = vec![0.0; g];
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let mut log_q = vec![0.0; g];
        let mut log_phi: Vec<Vec<f64>> = Vec::with_capacity(measures.len());
        for (k, mu) in measures.iter().enumerate() {
            let n = mu.len();
            let lk = &log_k[k];
            // u = a / (K v)
            for i in 0..n {
                let s = log_sum_exp((0..g).map(|j| lk[j * n + i] + log_v[k][j]));
                log_u[k][i] = log_a[k][i] - s;
            }
            // phi = K^T u
            let phi: Vec<f64> =
                (0..g).map(|j| log_sum_exp(lk[j * n..(j + 1) * n].iter().zip(&log_u[k]).map(|(a, b)| a + b))).collect();
            for (lq, ph) in log_q.iter_mut().zip(&phi) {
                if w[k] > 0.0 {
                    *lq += w[k] * ph;
                }
            }
            log_phi.push(phi);
        }
        for (k, phi) in log_phi.iter().enumerate() {
            for j in 0..g {
                log_v[k][j] = log_q[j] - phi[j];
            }
        }
        let next: Vec<f64> = log_q.iter().map(|x| x.exp()).collect();
        let change = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        if it > 0 && change < opts.tol {
            converged = true;
            break;
        }
    }

    let total: f64 = q.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NonFiniteKernel { magnitude: f64::NAN });
    }
    let weights: Vec<f64> = q.iter().map(|x| x / total).collect();
    if !converged {
        log::warn!("barycenter stopped after {iterations} iterations without meeting tol");
    }
    Ok(Barycenter {
        measure: DiscreteMeasure::new(support.dim(), support.atoms().to_vec(), weights)?,
        iterations,
        converged,
    })
}
