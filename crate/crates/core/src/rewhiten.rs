//! Second spatial whitening layer, applied to the VAR prediction residuals.
//!
//! Residuals are treated as zero-mean, so `rewhiten` and `colorize` are
//! exact linear inverses of each other.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{canonical_signs, row_means, sample_covariance, sorted_symmetric_eigen};

const EIGVAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RewhitenModel {
    /// `r × r` orthogonal matrix of residual principal directions.
    pub basis: DMatrix<f64>,
    /// Residual mode variances, floored to stay strictly positive.
    pub eigvals: DVector<f64>,
}

/// Fits the residual PCA of an `r × n` residual series (`n > r`).
pub fn fit_rewhiten(e: &DMatrix<f64>) -> Result<RewhitenModel> {
    let (r, n) = e.shape();
    if n <= r {
        return Err(Error::InsufficientSamples {
            module: "rewhiten",
            needed: r,
            found: n,
        });
    }
    let cov = (e * e.transpose()) / n as f64;
    let (mut basis, mut eigvals) = sorted_symmetric_eigen(cov);
    let largest = eigvals[0];
    if !(largest > 0.0) || !largest.is_finite() {
        return Err(Error::numerical(
            "rewhiten",
            "degenerate residual covariance: no positive eigenvalue",
        ));
    }
    let floor = EIGVAL_FLOOR * largest;
    let mut floored = 0;
    for l in eigvals.iter_mut() {
        if *l < floor {
            *l = floor;
            floored += 1;
        }
    }
    if floored > 0 {
        warn!("rewhiten: degenerate residual covariance, {floored} eigenvalue(s) floored at {floor:e}");
    }
    canonical_signs(&mut basis);
    Ok(RewhitenModel { basis, eigvals })
}

impl RewhitenModel {
    pub fn identity(dim: usize) -> Self {
        RewhitenModel {
            basis: DMatrix::identity(dim, dim),
            eigvals: DVector::from_element(dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    /// `W = Λ_e^{-1/2} B_eᵀ E`.
    pub fn rewhiten(&self, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if e.nrows() != self.dim() {
            return Err(Error::mismatch("rewhiten", "residual rows", self.dim(), e.nrows()));
        }
        let mut w = self.basis.tr_mul(e);
        for (mut row, l) in w.row_iter_mut().zip(self.eigvals.iter()) {
            row /= l.sqrt();
        }
        Ok(w)
    }

    /// `E = B_e Λ_e^{1/2} W`.
    pub fn colorize(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if w.nrows() != self.dim() {
            return Err(Error::mismatch("rewhiten", "white-noise rows", self.dim(), w.nrows()));
        }
        let mut scaled = w.clone();
        for (mut row, l) in scaled.row_iter_mut().zip(self.eigvals.iter()) {
            row *= l.sqrt();
        }
        Ok(&self.basis * scaled)
    }
}

/// How close a multichannel series is to unit white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Whiteness {
    pub max_abs_mean: f64,
    /// `max |cov(W) − I|` with the unbiased sample covariance.
    pub max_cov_deviation: f64,
    /// Largest entry of the lag-1 cross-correlation matrix.
    pub max_lag1_correlation: f64,
}

pub fn whiteness(w: &DMatrix<f64>) -> Whiteness {
    let (r, n) = w.shape();
    let mu = row_means(w);
    let cov = sample_covariance(w);
    let max_cov_deviation = (&cov - DMatrix::<f64>::identity(r, r)).amax();
    let mut max_lag1 = 0.0f64;
    if n > 2 {
        let std: Vec<f64> = (0..r).map(|i| cov[(i, i)].sqrt()).collect();
        for i in 0..r {
            for j in 0..r {
                let mut acc = 0.0;
                for t in 1..n {
                    acc += (w[(i, t)] - mu[i]) * (w[(j, t - 1)] - mu[j]);
                }
                let denom = (n - 1) as f64 * std[i] * std[j];
                if denom > 0.0 {
                    max_lag1 = max_lag1.max((acc / denom).abs());
                }
            }
        }
    }
    Whiteness {
        max_abs_mean: mu.amax(),
        max_cov_deviation,
        max_lag1_correlation: max_lag1,
    }
}
