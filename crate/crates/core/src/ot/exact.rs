//! Exact transport oracles for desk-scale instances.

use super::{check_exponent, cost_matrix, DiscreteMeasure};
use crate::{Error, Result};

/// Largest `n * m` accepted by [`exact_ot_lp`].
pub const MAX_LP_CELLS: usize = 64;

const PIVOT_EPS: f64 = 1e-12;

/// Closed-form `W_p` between two uniform 1D empirical measures of equal size:
/// the monotone (sorted) matching is optimal.
pub fn exact_wp_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::InvalidMeasure("exact_wp_1d needs 1D atoms".into()));
    }
    if mu.len() != nu.len() {
        return Err(Error::InvalidMeasure(format!("exact_wp_1d needs equal sizes, got {} and {}", mu.len(), nu.len())));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::InvalidMeasure("exact_wp_1d needs uniform weights".into()));
    }
    let mut xs = mu.atoms().to_vec();
    let mut ys = nu.atoms().to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let sum: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs().powf(p)).sum();
    Ok((sum / n).powf(1.0 / p))
}

/// Exact optimal transport cost `min_{P in U(a,b)} sum P_ij C_ij`.
///
/// Solved with a two-phase dense simplex over the transportation polytope
/// (Bland's rule, so degenerate vertices cannot cycle). Only meant as an
/// oracle: instances above [`MAX_LP_CELLS`] are refused.
pub fn exact_ot_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    let (n, m) = (mu.len(), nu.len());
    if n * m > MAX_LP_CELLS {
        return Err(Error::InstanceTooLarge { n, m });
    }
    let cost = cost_matrix(mu, nu, p)?;
    if n == 1 || m == 1 {
        // Single row or column: the plan is forced.
        let plan = |i: usize, j: usize| if n == 1 { nu.weights()[j] } else { mu.weights()[i] };
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..m {
                total += plan(i, j) * cost.get(i, j);
            }
        }
        return Ok(total);
    }

    // Equality rows: n row-sum constraints and the first m-1 column sums
    // (the last column constraint is implied by total mass).
    let n_vars = n * m;
    let n_rows = n + m - 1;
    let mut a = vec![vec![0.0; n_vars]; n_rows];
    let mut rhs = vec![0.0; n_rows];
    for i in 0..n {
        for j in 0..m {
            a[i][i * m + j] = 1.0;
        }
        rhs[i] = mu.weights()[i];
    }
    for j in 0..m - 1 {
        for i in 0..n {
            a[n + j][i * m + j] = 1.0;
        }
        rhs[n + j] = nu.weights()[j];
    }
    let x = simplex_min(&a, &rhs, cost.entries())?;
    Ok(x.iter().zip(cost.entries()).map(|(x, c)| x * c).sum())
}

/// `W_p = exact_ot_lp^(1/p)`.
pub fn exact_wp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    Ok(exact_ot_lp(mu, nu, p)?.max(0.0).powf(1.0 / p))
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let pv = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= pv;
        }
        let prow = self.t[r].clone();
        for (k, row) in self.t.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pvv) in row.iter_mut().zip(&prow) {
                    *v -= f * pvv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimize `obj . x` over the allowed columns, Bland's rule.
    fn optimize(&mut self, obj: &[f64], allowed: usize) -> Result<()> {
        for _ in 0..100_000 {
            // Reduced costs: obj_c - obj_B B^-1 A_c.
            let mut entering = None;
            for c in 0..allowed {
                if self.basis.contains(&c) {
                    continue;
                }
                let mut rc = obj[c];
                for (r, &bc) in self.basis.iter().enumerate() {
                    rc -= obj[bc] * self.t[r][c];
                }
                if rc < -PIVOT_EPS {
                    entering = Some(c);
                    break;
                }
            }
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let coef = self.t[r][c];
                if coef > PIVOT_EPS {
                    let ratio = self.t[r][self.cols] / coef;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - PIVOT_EPS
                                || (ratio <= lratio + PIVOT_EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            // The transportation polytope is bounded.
            let Some((r, _)) = leave else {
                return Err(Error::InvalidArgument("unbounded transport LP".into()));
            };
            self.pivot(r, c);
        }
        Err(Error::InvalidArgument("simplex iteration budget exhausted".into()))
    }
}

/// `min c.x  s.t.  A x = b, x >= 0` with `b >= 0`.
fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let rows = a.len();
    let n = c.len();
    let cols = n + rows;
    let t = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(r, (row, &rhs))| {
            let mut line = vec![0.0; cols + 1];
            line[..n].copy_from_slice(row);
            line[n + r] = 1.0;
            line[cols] = rhs.max(0.0);
            line
        })
        .collect();
    let mut tab = Tableau { t, basis: (n..n + rows).collect(), cols };

    // Phase 1: drive the artificials to zero.
    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    tab.optimize(&phase1, cols)?;
    let infeasibility: f64 = tab.basis.iter().enumerate().filter(|(_, &bc)| bc >= n).map(|(r, _)| tab.t[r][cols]).sum();
    if infeasibility > 1e-9 {
        return Err(Error::InvalidMeasure(format!("marginals are incompatible (phase-1 residual {infeasibility:e})")));
    }
    // Pivot any zero-level artificial out of the basis, or drop its row.
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            if let Some(c) = (0..n).find(|&c| tab.t[r][c].abs() > PIVOT_EPS) {
                tab.pivot(r, c);
            } else {
                tab.t.remove(r);
                tab.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }

    // Phase 2 over the structural columns only.
    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    tab.optimize(&phase2, n)?;

    let mut x = vec![0.0; n];
    for (r, &bc) in tab.basis.iter().enumerate() {
        if bc < n {
            x[bc] = tab.t[r][cols].max(0.0);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(xs: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_points_1d(xs).unwrap()
    }

    #[test]
    fn sorted_matching_examples() {
        assert_eq!(exact_wp_1d(&m1(&[0.0]), &m1(&[1.0]), 1.0).unwrap(), 1.0);
        let x = m1(&[3.0, -1.0, 0.5]);
        for p in [1.0, 2.0, 3.5] {
            assert_eq!(exact_wp_1d(&x, &x, p).unwrap(), 0.0);
        }
        // Matchings of {0,2} to {1,3}: identity costs (1+1)/2, swap (9+1)/2.
        assert!((exact_wp_1d(&m1(&[0.0, 2.0]), &m1(&[1.0, 3.0]), 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sorted_matching_errors() {
        assert!(exact_wp_1d(&m1(&[0.0]), &m1(&[1.0, 2.0]), 1.0).is_err());
        let skew = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.3, 0.7]).unwrap();
        assert!(exact_wp_1d(&skew, &m1(&[0.0, 1.0]), 1.0).is_err());
        let planar = DiscreteMeasure::dirac(&[0.0, 1.0]).unwrap();
        assert!(exact_wp_1d(&planar, &planar, 1.0).is_err());
    }

    #[test]
    fn lp_examples() {
        for p in [1.0, 2.0] {
            let v = exact_ot_lp(&m1(&[0.5]), &m1(&[-1.5]), p).unwrap();
            assert!((v - 2f64.powf(p)).abs() < 1e-12);
            assert!(exact_ot_lp(&m1(&[0.0, 1.0]), &m1(&[0.0, 1.0]), p).unwrap().abs() < 1e-12);
        }
        assert!((exact_ot_lp(&m1(&[0.0, 2.0]), &m1(&[1.0, 3.0]), 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_non_uniform_weights() {
        // Moving 0.25 from 0 to 1 is the only freedom; cost = 0.25 * 1.
        let mu = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.75, 0.25]).unwrap();
        let nu = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!((exact_ot_lp(&mu, &nu, 1.0).unwrap() - 0.25).abs() < 1e-12);
        let three = DiscreteMeasure::new(1, vec![0.0, 1.0, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
        // Integral of |F - G|: 0.3 on [0,1) plus 0.5 on [1,2).
        let v = exact_ot_lp(&three, &nu, 1.0).unwrap();
        assert!((v - 0.8).abs() < 1e-12, "{v}");
    }

    #[test]
    fn lp_refuses_large_instances() {
        let big: Vec<f64> = (0..9).map(f64::from).collect();
        assert!(matches!(exact_ot_lp(&m1(&big), &m1(&big), 1.0), Err(Error::InstanceTooLarge { n: 9, m: 9 })));
    }
}
