//! Reconstruction losses over a batch of items (rows) and their gradients
//! with respect to the reconstruction.

use super::CovarianceModel;
use crate::error::{Error, Result};
use crate::nn::matrix::dot;
use crate::nn::Matrix;

fn check_pair(x: &Matrix, recon: &Matrix) -> Result<()> {
    if x.shape() != recon.shape() {
        return Err(Error::shape(format!(
            "input {}x{} vs reconstruction {}x{}",
            x.rows(),
            x.cols(),
            recon.rows(),
            recon.cols()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::shape("empty batch"));
    }
    Ok(())
}

/// Batch mean of each item's mean squared residual, and `2(x̂ − x)/(k·batch)`.
pub fn mse_loss(x: &Matrix, recon: &Matrix) -> Result<(f64, Matrix)> {
    check_pair(x, recon)?;
    let n = x.data().len() as f64;
    let residual = recon.sub(x)?;
    let loss = residual.data().iter().map(|r| r * r).sum::<f64>() / n;
    let grad = residual.scale(2.0 / n);
    Ok((loss, grad))
}

/// Mean squared residual of one window (any shape, typically T×d).
pub fn window_mse_loss(window: &Matrix, recon: &Matrix) -> Result<f64> {
    check_pair(window, recon)?;
    let n = window.data().len() as f64;
    Ok(window
        .data()
        .iter()
        .zip(recon.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Batch mean of `‖(x̂ − x)Σ^(−1/2)‖₂`; gradient per item is `Σ⁻¹r / (N·‖rΣ^(−1/2)‖)`.
/// Items with zero residual contribute zero gradient.
pub fn mahalanobis_loss(x: &Matrix, recon: &Matrix, cov: &CovarianceModel) -> Result<(f64, Matrix)> {
    check_pair(x, recon)?;
    cov.check_dim(x.cols())?;
    let batch = x.rows() as f64;
    let residual = recon.sub(x)?;
    let whitened = residual.matmul(&cov.inverse_sqrt)?;
    let precision_r = residual.matmul(&cov.inverse)?;
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut total = 0.0;
    for b in 0..x.rows() {
        let norm = dot(whitened.row(b), whitened.row(b)).sqrt();
        total += norm;
        if norm > 0.0 {
            for (g, p) in grad.row_mut(b).iter_mut().zip(precision_r.row(b)) {
                *g = p / (batch * norm);
            }
        }
    }
    Ok((total / batch, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::covariance::CovarianceModel;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn mse_examples() {
        let x = m(&[vec![0.0, 0.0]]);
        assert_eq!(mse_loss(&x, &x).unwrap().0, 0.0);
        let (loss, grad) = mse_loss(&x, &m(&[vec![1.0, 1.0]])).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad.data(), &[1.0, 1.0]);
        assert!(mse_loss(&x, &m(&[vec![1.0]])).is_err());
    }

    #[test]
    fn window_examples() {
        let x = Matrix::zeros(5, 51);
        let r = x.map(|_| 0.1);
        assert!((window_mse_loss(&x, &r).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(window_mse_loss(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn window_equals_flattened_mse() {
        let w = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let r = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let flat_w = Matrix::from_vec(1, 12, w.data().to_vec()).unwrap();
        let flat_r = Matrix::from_vec(1, 12, r.data().to_vec()).unwrap();
        assert_eq!(window_mse_loss(&w, &r).unwrap(), mse_loss(&flat_w, &flat_r).unwrap().0);
    }

    #[test]
    fn mahalanobis_examples() {
        let ident = CovarianceModel::from_sigma(Matrix::identity(2), 0.0).unwrap();
        let x = m(&[vec![0.0, 0.0]]);
        let (l, _) = mahalanobis_loss(&x, &m(&[vec![3.0, 4.0]]), &ident).unwrap();
        assert!((l - 5.0).abs() < 1e-12);

        let diag = CovarianceModel::from_sigma(m(&[vec![4.0, 0.0], vec![0.0, 9.0]]), 0.0).unwrap();
        let (l, _) = mahalanobis_loss(&x, &m(&[vec![2.0, 3.0]]), &diag).unwrap();
        assert!((l - 2f64.sqrt()).abs() < 1e-12);

        let (l, g) = mahalanobis_loss(&x, &x, &diag).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mahalanobis_scales_with_sigma() {
        let x = m(&[vec![0.1, 0.2, 0.3], vec![0.0, -0.5, 0.2]]);
        let r = m(&[vec![0.4, 0.1, 0.3], vec![0.2, 0.5, -0.1]]);
        let ident = CovarianceModel::from_sigma(Matrix::identity(3), 0.0).unwrap();
        let sigma = 0.25f64;
        let scaled = CovarianceModel::from_sigma(Matrix::identity(3).scale(sigma * sigma), 0.0).unwrap();
        let a = mahalanobis_loss(&x, &r, &ident).unwrap().0;
        let b = mahalanobis_loss(&x, &r, &scaled).unwrap().0;
        assert!((b - a / sigma).abs() < 1e-12 * b);
        let eucl: f64 = (0..2)
            .map(|i| x.row(i).iter().zip(r.row(i)).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
            .sum::<f64>()
            / 2.0;
        assert!((a - eucl).abs() < 1e-12);
    }
}
