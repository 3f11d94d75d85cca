//! Residual covariance estimation and the inverse / inverse square root used
//! by the Mahalanobis loss and score.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ItemSet;
use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::nn::Matrix;
use crate::preprocess::Partition;

/// Relative shrinkage: `ε = SHRINKAGE · trace(Σ) / d`.
pub const SHRINKAGE: f64 = 1e-6;
/// Absolute floor on `ε` so zero-variance residuals stay invertible.
pub const MIN_SHRINKAGE: f64 = 1e-12;

/// `Σ` here already includes the shrinkage term `εI`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub sigma: Matrix,
    pub inverse: Matrix,
    pub inverse_sqrt: Matrix,
    pub shrinkage: f64,
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn from_na(m: &DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[(r, c)] = m[(r, c)];
        }
    }
    out
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if m.rows() != m.cols() || m.rows() == 0 {
        return Err(Error::shape(format!("{}x{} is not a square matrix", m.rows(), m.cols())));
    }
    let scale = m.data().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    for r in 0..m.rows() {
        for c in r + 1..m.cols() {
            if (m[(r, c)] - m[(c, r)]).abs() > 1e-12 * scale {
                return Err(Error::validation(format!("matrix is not symmetric at ({r}, {c})")));
            }
        }
    }
    m.ensure_finite("covariance")
}

/// `(Σ + εI)^(−1/2)` from a symmetric eigendecomposition.
pub fn matrix_inverse_sqrt(sigma: &Matrix, shrinkage: f64) -> Result<Matrix> {
    check_symmetric(sigma)?;
    let n = sigma.rows();
    let shifted = to_na(sigma) + DMatrix::identity(n, n) * shrinkage;
    let eig = shifted.symmetric_eigen();
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::numeric(format!(
            "covariance is not positive definite (eigenvalue {bad:e})"
        )));
    }
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let q = &eig.eigenvectors;
    let m = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    // symmetrize away rounding
    let m = (&m + m.transpose()) * 0.5;
    Ok(from_na(&m))
}

/// `(Σ + εI)⁻¹` through a Cholesky factorization.
fn cholesky_inverse(sigma: &Matrix) -> Result<Matrix> {
    let chol = to_na(sigma)
        .cholesky()
        .ok_or_else(|| Error::numeric("covariance is singular or not positive definite"))?;
    let inv = chol.inverse();
    let inv = (&inv + inv.transpose()) * 0.5;
    Ok(from_na(&inv))
}

impl CovarianceModel {
    /// Wraps a symmetric positive-definite `Σ`, adding `shrinkage·I` first.
    pub fn from_sigma(sigma: Matrix, shrinkage: f64) -> Result<Self> {
        check_symmetric(&sigma)?;
        let mut shifted = sigma;
        for i in 0..shifted.rows() {
            shifted[(i, i)] += shrinkage;
        }
        let inverse_sqrt = matrix_inverse_sqrt(&shifted, 0.0)?;
        let inverse = cholesky_inverse(&shifted)?;
        Ok(Self {
            sigma: shifted,
            inverse,
            inverse_sqrt,
            shrinkage,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.rows()
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        let shapes = [self.sigma.shape(), self.inverse.shape(), self.inverse_sqrt.shape()];
        if shapes.iter().any(|&s| s != (d, d)) {
            return Err(Error::shape(format!(
                "covariance is {}x{}, data has {d} features",
                self.sigma.rows(),
                self.sigma.cols()
            )));
        }
        Ok(())
    }

    /// Mean-centred sample covariance (divisor N−1) of residual rows plus shrinkage.
    pub fn from_residuals(residuals: &Matrix) -> Result<Self> {
        let (n, d) = residuals.shape();
        if n <= d {
            return Err(Error::validation(format!(
                "{n} residual rows cannot estimate a {d}x{d} covariance (need more than {d})"
            )));
        }
        residuals.ensure_finite("residuals")?;
        let mean: Vec<f64> = residuals.sum_rows().into_iter().map(|s| s / n as f64).collect();
        let mut centred = residuals.clone();
        for r in 0..n {
            for (v, m) in centred.row_mut(r).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let mut cov = centred.t_matmul(&centred)?.scale(1.0 / (n - 1) as f64);
        // exact symmetry
        for r in 0..d {
            for c in r + 1..d {
                let v = cov[(r, c)];
                cov[(c, r)] = v;
            }
        }
        let trace: f64 = (0..d).map(|i| cov[(i, i)]).sum();
        let shrinkage = (SHRINKAGE * trace / d as f64).max(MIN_SHRINKAGE);
        Self::from_sigma(cov, shrinkage)
    }
}

/// Fits `Σ` on the reconstruction residuals `x̂ − x` of training items only.
pub fn estimate_residual_covariance<A: Autoencoder>(model: &A, healthy: &ItemSet) -> Result<CovarianceModel> {
    if healthy.partition != Partition::Train {
        return Err(Error::Leakage(format!(
            "residual covariance must be fitted on training items, got {}",
            healthy.partition.as_str()
        )));
    }
    healthy.ensure_healthy()?;
    let (recon, _) = model.encode_decode(&healthy.items)?;
    let residuals = recon.sub(&healthy.items)?;
    CovarianceModel::from_residuals(&residuals)
}
