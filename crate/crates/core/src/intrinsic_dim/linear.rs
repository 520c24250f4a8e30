use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::io::ActivationMatrix;

pub const PCA_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDims {
    /// Components needed to explain 99% of the variance.
    pub pca_d: usize,
    pub pr_d: f64,
    /// Covariance spectrum, descending.
    pub eigenvalues: Vec<f64>,
}

/// (sum l)^2 / sum l^2
pub fn participation_ratio(eigenvalues: &[f64]) -> f64 {
    let s: f64 = eigenvalues.iter().sum();
    let s2: f64 = eigenvalues.iter().map(|l| l * l).sum();
    s * s / s2
}

/// Smallest m whose leading eigenvalues carry at least `threshold` of the
/// total. `eigenvalues` must be sorted descending.
pub fn pca_dim(eigenvalues: &[f64], threshold: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    // relative slack so exactly-at-threshold spectra are not lost to rounding
    let target = threshold * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc >= target {
            return i + 1;
        }
    }
    eigenvalues.len()
}

pub fn linear_dims(points: &ActivationMatrix) -> Result<LinearDims> {
    let n = points.n_samples();
    let d = points.n_dims();
    let mut x: DMatrix<f64> = points.data().to_dmatrix();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = x.tr_mul(&x) / (n as f64 - 1.0);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|l| l.max(0.0)).collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::degenerate("intrinsic-dim", "zero total variance"));
    }
    let pr_d = participation_ratio(&eigenvalues).clamp(1.0, d as f64);
    Ok(LinearDims {
        pca_d: pca_dim(&eigenvalues, PCA_THRESHOLD),
        pr_d,
        eigenvalues,
    })
}
