//! Online least squares over adaptively collected rows, the clipping
//! statistic, the sandwich covariance, and Wald intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::linalg::{is_positive_definite, min_eigenvalue, Cholesky, LinalgError, SymMatrix};

/// Diagonal entries of a covariance below `-VARIANCE_TOLERANCE` are errors;
/// smaller negative values are treated as zero.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("normalized Gram matrix is not invertible: {0}")]
    NotInvertible(LinalgError),
    #[error("no rows accumulated")]
    Empty,
    #[error("design vector has {got} entries, accumulator expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variance of coordinate {index} is negative ({value:e})")]
    NonPositiveVariance { index: usize, value: f64 },
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),
}

/// Running sums `Σ z zᵀ`, `Σ z y` plus every row, which the sandwich
/// middle term needs for residuals against the latest estimate.
#[derive(Debug, Clone)]
pub struct GramAccumulator {
    dim: usize,
    n: usize,
    zz: SymMatrix,
    zy: Vec<f64>,
    designs: Vec<f64>,
    rewards: Vec<f64>,
}

/// Point estimate at a given sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaHat {
    pub values: Vec<f64>,
    pub at_time: usize,
}

/// Plug-in covariance of `√t (θ̂ − θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCov {
    pub matrix: SymMatrix,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            n: 0,
            zz: SymMatrix::zeros(dim),
            zy: vec![0.0; dim],
            designs: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized `Σ z zᵀ`.
    pub fn gram(&self) -> &SymMatrix {
        &self.zz
    }

    /// Unnormalized `Σ z y`.
    pub fn moment(&self) -> &[f64] {
        &self.zy
    }

    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (&self.designs[i * self.dim..(i + 1) * self.dim], self.rewards[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.designs.chunks(self.dim).zip(self.rewards.iter().copied())
    }

    pub fn update(&mut self, z: &[f64], y: f64) -> Result<(), EstimatorError> {
        if z.len() != self.dim {
            return Err(EstimatorError::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        self.n += 1;
        self.zz.add_outer(z, 1.0);
        for (acc, zi) in self.zy.iter_mut().zip(z) {
            *acc += zi * y;
        }
        self.designs.extend_from_slice(z);
        self.rewards.push(y);
        Ok(())
    }

    /// `(1/t) Σ z zᵀ`
    pub fn normalized_gram(&self) -> SymMatrix {
        self.zz.scaled(1.0 / self.n as f64)
    }

    /// `θ̂ = ((1/t)Σ z zᵀ)⁻¹ ((1/t)Σ z y)`
    pub fn solve(&self) -> Result<ThetaHat, EstimatorError> {
        if self.n == 0 {
            return Err(EstimatorError::Empty);
        }
        let inv_n = 1.0 / self.n as f64;
        let rhs: Vec<f64> = self.zy.iter().map(|v| v * inv_n).collect();
        let chol = Cholesky::factor(&self.normalized_gram()).map_err(EstimatorError::NotInvertible)?;
        let values = chol.solve(&rhs).map_err(EstimatorError::NotInvertible)?;
        Ok(ThetaHat {
            values,
            at_time: self.n,
        })
    }

    /// `λ_min((1/t) Σ z zᵀ)`
    pub fn clipping_stat(&self) -> f64 {
        assert!(self.n >= 1, "clipping statistic needs at least one row");
        min_eigenvalue(&self.normalized_gram())
    }

    /// Whether `λ_min` of the normalized Gram matrix, with `candidate`
    /// included as one more row, is at or below `threshold`.
    ///
    /// Returns the eigenvalue when it had to be computed. A successful
    /// Cholesky factorization of `G − threshold·I` proves `λ_min > threshold`
    /// and skips the eigen solve.
    pub fn clipping_check(&self, candidate: Option<&[f64]>, threshold: f64) -> (bool, Option<f64>) {
        let mut zz = self.zz.clone();
        let mut n = self.n;
        if let Some(z) = candidate {
            zz.add_outer(z, 1.0);
            n += 1;
        }
        assert!(n >= 1, "clipping check needs at least one row");
        let g = zz.scaled(1.0 / n as f64);
        if threshold.is_finite() && is_positive_definite(&g.shifted(-threshold)) {
            return (false, None);
        }
        let lambda = min_eigenvalue(&g);
        (lambda <= threshold, Some(lambda))
    }

    /// Sandwich covariance with residuals `ê_s = y_s − z_sᵀθ̂`.
    pub fn sandwich(&self, theta_hat: &ThetaHat) -> Result<SandwichCov, EstimatorError> {
        if self.n == 0 {
            return Err(EstimatorError::Empty);
        }
        if theta_hat.values.len() != self.dim {
            return Err(EstimatorError::DimensionMismatch {
                expected: self.dim,
                got: theta_hat.values.len(),
            });
        }
        let inv_n = 1.0 / self.n as f64;
        let bread = Cholesky::factor(&self.normalized_gram())
            .map_err(EstimatorError::NotInvertible)?
            .inverse();
        let mut meat = SymMatrix::zeros(self.dim);
        for (z, y) in self.rows() {
            let resid = y - crate::features::dot(z, &theta_hat.values);
            meat.add_outer(z, resid * resid * inv_n);
        }
        Ok(SandwichCov {
            matrix: congruence(&bread, &meat),
        })
    }
}

/// `A B A` for symmetric `A`, `B`, symmetrized exactly.
fn congruence(a: &SymMatrix, b: &SymMatrix) -> SymMatrix {
    let n = a.dim();
    let mut ab = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                ab[i * n + j] += aik * b.get(k, j);
            }
        }
    }
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = (0..n).map(|k| ab[i * n + k] * a.get(k, j)).sum();
            let w: f64 = (0..n).map(|k| ab[j * n + k] * a.get(k, i)).sum();
            out.set(i, j, 0.5 * (v + w));
        }
    }
    out
}

/// Two-sided standard normal critical value, e.g. 1.959964 at 0.95.
pub fn normal_critical_value(level: f64) -> Result<f64, EstimatorError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EstimatorError::InvalidLevel(level));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Standard errors `sqrt(S_jj / t)`.
pub fn standard_errors(cov: &SandwichCov, t: usize) -> Result<Vec<f64>, EstimatorError> {
    cov.matrix
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            if v < -VARIANCE_TOLERANCE {
                Err(EstimatorError::NonPositiveVariance { index, value: v })
            } else {
                Ok((v.max(0.0) / t as f64).sqrt())
            }
        })
        .collect()
}

/// Per-coordinate `θ̂_j ± z · sqrt(S_jj / t)`.
pub fn wald_ci(
    theta_hat: &ThetaHat,
    cov: &SandwichCov,
    t: usize,
    level: f64,
) -> Result<Vec<(f64, f64)>, EstimatorError> {
    let z = normal_critical_value(level)?;
    let se = standard_errors(cov, t)?;
    Ok(theta_hat
        .values
        .iter()
        .zip(se)
        .map(|(&est, se)| (est - z * se, est + z * se))
        .collect())
}
