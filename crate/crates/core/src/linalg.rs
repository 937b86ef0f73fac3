//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// Flips each column so that its largest-magnitude entry is positive.
pub(crate) fn canonical_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let mut best = 0.0f64;
        for &v in col.iter() {
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Left singular vectors and singular values of `m`, sorted by decreasing
/// singular value. Wide matrices are first reduced by a QR factorization
/// of their transpose, which leaves the left singular pairs unchanged.
pub(crate) fn left_singular(m: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (u, s) = if m.ncols() > m.nrows() {
        let r = m.transpose().qr().r();
        let svd = SVD::new(r.transpose(), true, false);
        (svd.u.unwrap(), svd.singular_values)
    } else {
        let svd = SVD::new(m, true, false);
        (svd.u.unwrap(), svd.singular_values)
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let s = DVector::from_iterator(order.len(), order.iter().map(|&k| s[k]));
    (u, s)
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vecs = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let vals = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    (vecs, vals)
}

/// `max |aᵀa − I|` over all entries.
pub fn orthonormality_error(a: &DMatrix<f64>) -> f64 {
    let g = a.tr_mul(a);
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Row means of a matrix.
pub(crate) fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols().max(1) as f64;
    let mut mu = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        mu += col;
    }
    mu / n
}

/// Sample covariance `(m − mean)(m − mean)ᵀ / (n − 1)`.
pub fn sample_covariance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mu = row_means(m);
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        col -= &mu;
    }
    let denom = (m.ncols().max(2) - 1) as f64;
    (&c * c.transpose()) / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let mut m = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, -0.8, -0.2, 0.3, 0.1]);
        canonical_signs(&mut m);
        assert_eq!(m[(1, 0)], 0.8);
        assert_eq!(m[(0, 1)], 0.9);
    }

    #[test]
    fn wide_and_tall_paths_agree() {
        let m = DMatrix::from_fn(4, 9, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * (i * j) as f64);
        let (u_wide, s_wide) = left_singular(m.clone());
        let svd = SVD::new(m, true, false);
        let mut s_ref: Vec<f64> = svd.singular_values.iter().copied().collect();
        s_ref.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in s_wide.iter().zip(&s_ref) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(orthonormality_error(&u_wide) < 1e-12);
    }
}
