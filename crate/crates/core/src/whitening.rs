//! Spatial PCA of the vectorized training frames.
//!
//! The fitted model maps pixel vectors `x` to unit-variance mode
//! coefficients `z = Λ^{-1/2} Bᵀ (x − μ)` and back.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{canonical_signs, left_singular, row_means};

pub const DEFAULT_ENERGY_THRESHOLD: f64 = 0.999;

/// Eigenvalues below this fraction of the largest one are treated as null modes.
const NULL_MODE_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningModel {
    /// Per-pixel temporal mean (meters).
    pub mean: DVector<f64>,
    /// `P × r` principal spatial modes, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Mode variances, strictly positive and non-increasing (m²).
    pub eigvals: DVector<f64>,
    /// Sum of all covariance eigenvalues, including discarded modes.
    pub total_variance: f64,
}

/// Fits the spatial PCA of a `P × T` pixel matrix.
///
/// The retained rank is the smallest `r` whose cumulative variance reaches
/// `energy_threshold` of the total, after which null modes are dropped.
pub fn fit_pca(x: &DMatrix<f64>, energy_threshold: f64) -> Result<WhiteningModel> {
    if !(energy_threshold > 0.0 && energy_threshold <= 1.0) {
        return Err(Error::invalid(
            "whitening",
            format!("energy threshold must lie in (0, 1], got {energy_threshold}"),
        ));
    }
    let (p, t) = x.shape();
    if t < 2 {
        return Err(Error::InsufficientSamples {
            module: "whitening",
            needed: 1,
            found: t,
        });
    }
    if p == 0 {
        return Err(Error::invalid("whitening", "no pixels"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("whitening", "data contains non-finite values"));
    }

    let mean = row_means(x);
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let (u, s) = left_singular(centered);
    let eig_all: Vec<f64> = s.iter().map(|v| v * v / (t - 1) as f64).collect();
    let largest = eig_all.first().copied().unwrap_or(0.0);
    if !(largest > 0.0) {
        return Err(Error::numerical(
            "whitening",
            "degenerate covariance: no positive eigenvalue",
        ));
    }

    let max_rank = p.min(t - 1).min(eig_all.len());
    let total: f64 = eig_all[..max_rank].iter().sum();
    let mut cumulative = 0.0;
    let mut rank = max_rank;
    for (i, &l) in eig_all[..max_rank].iter().enumerate() {
        cumulative += l;
        if cumulative >= energy_threshold * total {
            rank = i + 1;
            break;
        }
    }
    while rank > 1 && eig_all[rank - 1] < NULL_MODE_RATIO * largest {
        rank -= 1;
    }

    let mut basis = u.columns(0, rank).into_owned();
    canonical_signs(&mut basis);
    Ok(WhiteningModel {
        mean,
        basis,
        eigvals: DVector::from_column_slice(&eig_all[..rank]),
        total_variance: total,
    })
}

impl WhiteningModel {
    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.mean.len()
    }

    /// Fraction of the training variance carried by the retained modes.
    pub fn retained_energy(&self) -> f64 {
        self.eigvals.sum() / self.total_variance
    }

    /// `Z = Λ^{-1/2} Bᵀ (X − μ 1ᵀ)`, an `r × T` coefficient series.
    pub fn whiten(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n_pixels() {
            return Err(Error::mismatch("whitening", "pixel count", self.n_pixels(), x.nrows()));
        }
        let projected_mean = self.basis.tr_mul(&self.mean);
        let mut z = self.basis.tr_mul(x);
        for mut col in z.column_iter_mut() {
            col -= &projected_mean;
            for (v, l) in col.iter_mut().zip(self.eigvals.iter()) {
                *v /= l.sqrt();
            }
        }
        Ok(z)
    }

    /// `B Λ^{1/2}`, mapping unit-variance coefficients to centered pixels.
    pub fn coloring_matrix(&self) -> DMatrix<f64> {
        let mut m = self.basis.clone();
        for (mut col, l) in m.column_iter_mut().zip(self.eigvals.iter()) {
            col *= l.sqrt();
        }
        m
    }

    /// `X̂ = B Λ^{1/2} Z + μ 1ᵀ`.
    pub fn unwhiten(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.nrows() != self.rank() {
            return Err(Error::mismatch("whitening", "coefficient rows", self.rank(), z.nrows()));
        }
        let mut x = self.coloring_matrix() * z;
        for mut col in x.column_iter_mut() {
            col += &self.mean;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_error, sample_covariance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn identical_columns_are_degenerate() {
        let x = DMatrix::from_fn(5, 10, |i, _| i as f64);
        let err = fit_pca(&x, 0.999).unwrap_err();
        assert!(err.to_string().contains("degenerate covariance"));
    }

    #[test]
    fn single_frame_is_insufficient() {
        assert!(fit_pca(&DMatrix::zeros(3, 1), 0.9).is_err());
        assert!(fit_pca(&gaussian(3, 10, 1), 0.0).is_err());
        assert!(fit_pca(&gaussian(3, 10, 1), 1.5).is_err());
    }

    #[test]
    fn iid_unit_data_gives_unit_eigenvalues() {
        let x = gaussian(6, 10_000, 4);
        let m = fit_pca(&x, 1.0).unwrap();
        assert_eq!(m.rank(), 6);
        for l in m.eigvals.iter() {
            assert!((l - 1.0).abs() < 0.1, "{l}");
        }
        assert!(orthonormality_error(&m.basis) < 1e-10);
    }

    #[test]
    fn matches_covariance_eigendecomposition() {
        // Independent route: eigen-decompose the explicit sample covariance.
        let mix = DMatrix::from_fn(5, 5, |i, j| if i >= j { 1.0 + (i * j) as f64 * 0.3 } else { 0.0 });
        let x = &mix * gaussian(5, 400, 8);
        let m = fit_pca(&x, 1.0).unwrap();
        let (_, vals) = crate::linalg::sorted_symmetric_eigen(sample_covariance(&x));
        for (a, b) in m.eigvals.iter().zip(vals.iter()) {
            assert!((a - b).abs() < 1e-9 * vals[0], "{a} vs {b}");
        }
    }

    #[test]
    fn mean_frames_whiten_to_zero_and_mode_frame_to_unit_vector() {
        let x = gaussian(4, 50, 2);
        let m = fit_pca(&x, 1.0).unwrap();
        let flat = DMatrix::from_fn(4, 3, |i, _| m.mean[i]);
        assert!(m.whiten(&flat).unwrap().amax() < 1e-12);

        let frame = &m.mean + m.basis.column(0) * m.eigvals[0].sqrt();
        let z = m.whiten(&DMatrix::from_column_slice(4, 1, frame.as_slice())).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12);
        assert!(z.rows(1, 3).amax() < 1e-12);
    }

    #[test]
    fn unwhiten_of_zero_is_mean() {
        let m = fit_pca(&gaussian(4, 50, 2), 1.0).unwrap();
        let x = m.unwhiten(&DMatrix::zeros(m.rank(), 2)).unwrap();
        for col in x.column_iter() {
            assert_eq!(col, m.mean);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = fit_pca(&gaussian(4, 50, 2), 1.0).unwrap();
        assert!(m.whiten(&DMatrix::zeros(3, 2)).is_err());
        assert!(m.unwhiten(&DMatrix::zeros(m.rank() + 1, 2)).is_err());
    }

    #[test]
    fn whitened_training_data_has_identity_covariance_and_zero_mean() {
        let mix = DMatrix::from_fn(6, 6, |i, j| ((i + 2 * j) % 5) as f64 + if i == j { 3.0 } else { 0.0 });
        let x = &mix * gaussian(6, 2000, 12);
        let m = fit_pca(&x, 1.0).unwrap();
        let z = m.whiten(&x).unwrap();
        let cov = sample_covariance(&z);
        let dev = (cov - DMatrix::identity(6, 6)).amax();
        assert!(dev < 5.0 / (2000f64).sqrt(), "{dev}");
        assert!(row_means(&z).amax() < 1e-10 * z.amax());
    }

    #[test]
    fn truncation_reconstruction_error_matches_discarded_energy() {
        let scales = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 3.0, 2.0, 0.4, 0.2, 0.1]));
        let rot = crate::linalg::sorted_symmetric_eigen(sample_covariance(&gaussian(6, 20, 5))).0;
        let x = &rot * scales * gaussian(6, 3000, 6);
        let m = fit_pca(&x, 0.97).unwrap();
        assert!(m.rank() < 6);
        assert!(m.retained_energy() >= 0.97);
        let recon = m.unwhiten(&m.whiten(&x).unwrap()).unwrap();
        let err: f64 = (&recon - &x).iter().map(|v| v * v).sum();
        let full = fit_pca(&x, 1.0).unwrap();
        let discarded: f64 = full.eigvals.iter().skip(m.rank()).sum::<f64>() * (x.ncols() - 1) as f64;
        assert!((err - discarded).abs() < 0.01 * discarded, "{err} vs {discarded}");
    }
}
