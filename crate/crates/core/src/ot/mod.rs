//! Ground-truth transport machinery: entropic (Sinkhorn) distances between
//! discrete measures, exact small-instance oracles, and fixed-support
//! Wasserstein barycenters.

mod barycenter;
mod exact;
mod sinkhorn;

pub use barycenter::{barycenter, default_grid_1d, BarycenterOptions, BARYCENTER_GRID_POINTS};
pub use exact::{exact_ot_lp, exact_wp, exact_wp_1d, MAX_LP_CELLS};
pub use sinkhorn::{sinkhorn, sinkhorn_with_cost, SinkhornOptions, SinkhornResult};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on `sum(weights) == 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A finitely supported probability measure: atoms in R^d with simplex weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    /// Row-major `len x dim`.
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("atom dimension must be >= 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if atoms.len() != dim * weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not form {} atoms of dimension {dim}",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite atom coordinate".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { dim, atoms, weights })
    }

    /// Empirical measure with weight `1/n` on each atom.
    pub fn uniform(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        if dim == 0 || atoms.is_empty() || !atoms.len().is_multiple_of(dim) {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates cannot be split into atoms of dimension {dim}",
                atoms.len()
            )));
        }
        let n = atoms.len() / dim;
        Self::new(dim, atoms, vec![1.0 / n as f64; n])
    }

    pub fn from_points_1d(points: &[f64]) -> Result<Self> {
        Self::uniform(1, points.to_vec())
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= SIMPLEX_TOL)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mk, x) in m.iter_mut().zip(self.atom(i)) {
                *mk += w * x;
            }
        }
        m
    }

    pub fn translated(&self, t: &[f64]) -> Result<Self> {
        if t.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: t.len() });
        }
        let atoms = self.atoms.chunks(self.dim).flat_map(|a| a.iter().zip(t).map(|(x, s)| x + s)).collect();
        Ok(Self { dim: self.dim, atoms, weights: self.weights.clone() })
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { dim: self.dim, atoms: self.atoms.iter().map(|x| a * x).collect(), weights: self.weights.clone() }
    }

    /// `(min, max)` over every coordinate of every atom.
    pub fn bounds(&self) -> (f64, f64) {
        self.atoms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }
}

/// Pairwise ground costs `C[i][j] = |x_i - y_j|^p` (Euclidean norm).
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    p: f64,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

/// `|x - y|^p` for the Euclidean norm.
pub fn ground_cost(x: &[f64], y: &[f64], p: f64) -> f64 {
    if x.len() == 1 {
        let d = (x[0] - y[0]).abs();
        return if p == 1.0 {
            d
        } else if p == 2.0 {
            d * d
        } else {
            d.powf(p)
        };
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if p == 2.0 {
        sq
    } else if p == 1.0 {
        sq.sqrt()
    } else {
        sq.powf(0.5 * p)
    }
}

pub fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

pub fn cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<CostMatrix> {
    check_exponent(p)?;
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let (rows, cols) = (mu.len(), nu.len());
    let mut entries = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let x = mu.atom(i);
        entries.extend((0..cols).map(|j| ground_cost(x, nu.atom(j), p)));
    }
    Ok(CostMatrix { rows, cols, p, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(xs: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_points_1d(xs).unwrap()
    }

    #[test]
    fn cost_matrix_examples() {
        assert_eq!(cost_matrix(&m1(&[0.0]), &m1(&[1.0]), 1.0).unwrap().entries(), &[1.0]);
        assert_eq!(cost_matrix(&m1(&[0.0]), &m1(&[3.0]), 2.0).unwrap().entries(), &[9.0]);
        let a = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
        assert_eq!(cost_matrix(&a, &b, 1.0).unwrap().entries(), &[5.0]);
    }

    #[test]
    fn cost_matrix_errors() {
        let a = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
        assert!(matches!(cost_matrix(&a, &m1(&[1.0]), 1.0), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
        assert!(matches!(cost_matrix(&m1(&[0.0]), &m1(&[1.0]), 0.5), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn cost_matrix_symmetric_on_identical_measures() {
        let x = m1(&[0.3, -1.2, 4.0, 2.5]);
        let c = cost_matrix(&x, &x, 1.5).unwrap();
        for i in 0..4 {
            assert_eq!(c.get(i, i), 0.0);
            for j in 0..4 {
                assert_eq!(c.get(i, j), c.get(j, i));
                let direct = (x.atom(i)[0] - x.atom(j)[0]).abs().powf(1.5);
                assert!((c.get(i, j) - direct).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(1, vec![], vec![]).is_err());
        assert!(DiscreteMeasure::new(2, vec![0.0, 1.0, 2.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        let m = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        assert!(!m.is_uniform());
        assert_eq!(m.mean(), vec![0.75]);
    }
}
