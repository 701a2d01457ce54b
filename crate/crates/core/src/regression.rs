//! Least-squares conditional expectation estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionBasis {
    /// Monomials of total degree `<= degree` in the standardized features.
    Polynomial { degree: usize },
    /// Equal-width cells per feature; the fit is the cell mean.
    PiecewiseBins { count: usize },
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis::Polynomial { degree: 3 }
    }
}

impl std::fmt::Display for RegressionBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegressionBasis::Polynomial { degree } => write!(f, "polynomial(degree {degree})"),
            RegressionBasis::PiecewiseBins { count } => write!(f, "piecewise_bins({count})"),
        }
    }
}

enum Fit {
    /// Orthonormal basis of the design's column space and the triangular
    /// factor.
    Qr(DMatrix<f64>, DMatrix<f64>),
    /// Ridge-regularized normal equations, used when the design is
    /// numerically rank deficient.
    Ridge { design: DMatrix<f64>, chol: nalgebra::Cholesky<f64, nalgebra::Dyn> },
    Bins { cell: Vec<usize>, cells: usize },
}

/// A fitted projection operator for one set of features; apply it to any
/// number of target vectors.
pub struct Regressor {
    fit: Fit,
    size: usize,
    /// Kept feature columns with their mean and standard deviation.
    scaling: Vec<(usize, f64, f64)>,
    exps: Vec<Vec<usize>>,
    /// Lower edge and width per kept column, for bins.
    edges: Vec<(f64, f64)>,
    bins: usize,
}

/// All exponent tuples of total degree `<= degree` in `q` variables.
fn exponents(q: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; q]];
    let mut frontier = vec![vec![0; q]];
    for _ in 0..degree {
        let mut next = Vec::new();
        for e in &frontier {
            // only raise indices at or after the last nonzero to avoid repeats
            let last = e.iter().rposition(|&v| v > 0).unwrap_or(0);
            for i in last..q {
                let mut f = e.clone();
                f[i] += 1;
                next.push(f);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

impl Regressor {
    /// `features` is row-major `m x dim`.
    pub fn fit(features: &[f64], dim: usize, basis: RegressionBasis) -> Result<Self> {
        let m = features.len().checked_div(dim).unwrap_or(0);
        if dim > 0 && features.len() != m * dim {
            return Err(Error::Dimension("feature matrix is ragged".into()));
        }
        let m = if dim == 0 { usize::MAX } else { m };
        // standardize; drop (numerically) constant features
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut scaling = Vec::new();
        for c in 0..dim {
            let col: Vec<f64> = (0..m).map(|r| features[r * dim + c]).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
            if sd > 1e-12 * (1.0 + mean.abs()) {
                cols.push(col.iter().map(|v| (v - mean) / sd).collect());
                scaling.push((c, mean, sd));
            }
        }
        let mut reg = Regressor {
            fit: Fit::Bins { cell: Vec::new(), cells: 1 },
            size: 1,
            scaling,
            exps: Vec::new(),
            edges: Vec::new(),
            bins: 1,
        };
        if cols.is_empty() {
            return Ok(reg);
        }
        let m = cols[0].len();
        match basis {
            RegressionBasis::Polynomial { degree } => {
                let exps = exponents(cols.len(), degree);
                let p = exps.len();
                if m < 10 * p {
                    return Err(Error::InsufficientScenarios { basis: basis.to_string(), needed: 10 * p, got: m });
                }
                let design = DMatrix::from_fn(m, p, |r, c| {
                    exps[c].iter().enumerate().fold(1.0, |acc, (i, &e)| acc * cols[i][r].powi(e as i32))
                });
                reg.exps = exps;
                reg.size = p;
                let qr = design.clone().qr();
                let r = qr.r();
                let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
                let full_rank = (0..p).all(|i| r[(i, i)].abs() > 1e-10 * diag_max);
                if full_rank {
                    reg.fit = Fit::Qr(qr.q(), r);
                    return Ok(reg);
                }
                let mut gram = design.tr_mul(&design);
                let lambda = 1e-8 * gram.trace() / p as f64;
                for i in 1..p {
                    gram[(i, i)] += lambda;
                }
                let chol = gram
                    .cholesky()
                    .ok_or_else(|| Error::RankDeficient { basis: basis.to_string() })?;
                reg.fit = Fit::Ridge { design, chol };
                Ok(reg)
            }
            RegressionBasis::PiecewiseBins { count } => {
                let count = count.max(1);
                let cells = count.pow(cols.len() as u32);
                if m < 10 * cells {
                    return Err(Error::InsufficientScenarios { basis: basis.to_string(), needed: 10 * cells, got: m });
                }
                let mut cell = vec![0usize; m];
                for col in &cols {
                    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let w = (hi - lo) / count as f64;
                    for (c, v) in cell.iter_mut().zip(col) {
                        let b = (((v - lo) / w) as usize).min(count - 1);
                        *c = *c * count + b;
                    }
                    reg.edges.push((lo, w));
                }
                reg.bins = count;
                reg.size = cells;
                reg.fit = Fit::Bins { cell, cells };
                Ok(reg)
            }
        }
    }

    /// Number of basis functions actually used.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn project(&self, targets: &[f64]) -> Vec<f64> {
        match &self.fit {
            Fit::Qr(q, _) => {
                let y = DVector::from_column_slice(targets);
                let c = q.tr_mul(&y);
                (q * c).as_slice().to_vec()
            }
            Fit::Ridge { design, chol } => {
                let y = DVector::from_column_slice(targets);
                let c = chol.solve(&design.tr_mul(&y));
                (design * c).as_slice().to_vec()
            }
            Fit::Bins { cell, cells } => {
                if cell.is_empty() {
                    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
                    return vec![mean; targets.len()];
                }
                let mut sum = vec![0.0; *cells];
                let mut cnt = vec![0usize; *cells];
                for (c, t) in cell.iter().zip(targets) {
                    sum[*c] += t;
                    cnt[*c] += 1;
                }
                cell.iter().map(|c| sum[*c] / cnt[*c] as f64).collect()
            }
        }
    }
}

impl Regressor {
    /// Standardized kept coordinates of one raw feature row.
    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        self.scaling.iter().map(|&(c, mean, sd)| (row[c] - mean) / sd).collect()
    }

    /// Evaluate the fitted regression function of `targets` at new feature
    /// rows (row-major, same width as the fit).
    pub fn predict(&self, targets: &[f64], new_features: &[f64], dim: usize) -> Vec<f64> {
        let rows = new_features.len().checked_div(dim).unwrap_or(1);
        let row = |r: usize| &new_features[r * dim..(r + 1) * dim];
        match &self.fit {
            Fit::Bins { cell, cells } => {
                if cell.is_empty() {
                    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
                    return vec![mean; rows];
                }
                let mut sum = vec![0.0; *cells];
                let mut cnt = vec![0usize; *cells];
                for (c, t) in cell.iter().zip(targets) {
                    sum[*c] += t;
                    cnt[*c] += 1;
                }
                (0..rows)
                    .map(|r| {
                        let s = self.standardize(row(r));
                        let mut c = 0;
                        for (v, (lo, w)) in s.iter().zip(&self.edges) {
                            let b = (((v - lo) / w).max(0.0) as usize).min(self.bins - 1);
                            c = c * self.bins + b;
                        }
                        if cnt[c] > 0 {
                            sum[c] / cnt[c] as f64
                        } else {
                            f64::NAN
                        }
                    })
                    .collect()
            }
            Fit::Qr(q, r) => {
                let y = DVector::from_column_slice(targets);
                let qty = q.tr_mul(&y);
                let coef = r.solve_upper_triangular(&qty).unwrap_or(qty);
                (0..rows).map(|i| self.basis_row(row(i)).dot(&coef)).collect()
            }
            Fit::Ridge { design, chol } => {
                let y = DVector::from_column_slice(targets);
                let coef = chol.solve(&design.tr_mul(&y));
                (0..rows).map(|i| self.basis_row(row(i)).dot(&coef)).collect()
            }
        }
    }

    fn basis_row(&self, row: &[f64]) -> DVector<f64> {
        let s = self.standardize(row);
        DVector::from_iterator(
            self.exps.len(),
            self.exps.iter().map(|e| e.iter().enumerate().fold(1.0, |acc, (i, &k)| acc * s[i].powi(k as i32))),
        )
    }
}

/// Fitted values of `E[targets | features]`.
pub fn conditional_expectation(targets: &[f64], features: &[f64], dim: usize, basis: RegressionBasis) -> Result<Vec<f64>> {
    if dim > 0 && features.len() != targets.len() * dim {
        return Err(Error::Dimension(format!(
            "{} targets but {} feature values of dimension {dim}",
            targets.len(),
            features.len()
        )));
    }
    Ok(Regressor::fit(features, dim, basis)?.project(targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_count_is_binomial() {
        assert_eq!(exponents(1, 3).len(), 4);
        assert_eq!(exponents(2, 3).len(), 10);
        assert_eq!(exponents(3, 2).len(), 10);
    }

    #[test]
    fn constant_targets_and_idempotence() {
        let feats: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let fitted = conditional_expectation(&vec![2.5; 200], &feats, 1, RegressionBasis::default()).unwrap();
        assert!(fitted.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let t: Vec<f64> = feats.iter().map(|v| v.exp()).collect();
        let r = Regressor::fit(&feats, 1, RegressionBasis::default()).unwrap();
        let a = r.project(&t);
        let b = r.project(&a);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-10));
    }

    #[test]
    fn prediction_matches_fitted_values() {
        let feats: Vec<f64> = (0..300).map(|i| (i as f64 * 0.61).cos()).collect();
        let t: Vec<f64> = feats.iter().map(|v| 1.0 + v - 0.5 * v * v * v).collect();
        let r = Regressor::fit(&feats, 1, RegressionBasis::default()).unwrap();
        let fitted = r.project(&t);
        let pred = r.predict(&t, &feats[..5], 1);
        assert!(pred.iter().zip(&fitted).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!((r.predict(&t, &[0.3], 1)[0] - (1.3 - 0.5 * 0.027)).abs() < 1e-10);
    }

    #[test]
    fn too_few_scenarios_is_an_error() {
        let feats: Vec<f64> = (0..30).map(|i| i as f64).collect();
        assert!(matches!(
            conditional_expectation(&feats, &feats, 1, RegressionBasis::default()),
            Err(Error::InsufficientScenarios { .. })
        ));
    }
}
