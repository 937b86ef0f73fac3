//! Vector autoregression on whitened mode coefficients.
//!
//! `z_t = Σ_{i=1..p} A_i z_{t−i} + e_t`, fitted by intercept-free ordinary
//! least squares over the stacked lag design.

use nalgebra::{Cholesky, DMatrix, Schur};

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_MAX_ORDER: usize = 10;

/// Companion spectral radius a model must stay below to count as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Spectral radius a model is shrunk to when it is not stable.
pub const SHRINK_TARGET: f64 = 1.0 - 1e-6;

/// Relative pivot size under which a lag column counts as collinear.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    /// `A_1 … A_p`, each `r × r`.
    pub coeffs: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub spectral_radius: f64,
    pub stable: bool,
}

/// Burn-in steps discarded before synthesized output starts.
pub fn burn_in(order: usize) -> usize {
    (10 * order).max(200)
}

impl VarModel {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let r = coeffs
            .first()
            .map(|a| a.nrows())
            .ok_or_else(|| Error::invalid("var", "model needs at least one lag"))?;
        for a in &coeffs {
            if a.nrows() != r || a.ncols() != r {
                return Err(Error::mismatch("var", "coefficient matrix size", r, a.ncols()));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("var", "non-finite coefficient"));
            }
        }
        Ok(VarModel { coeffs })
    }

    pub fn zeros(dim: usize, order: usize) -> Self {
        VarModel {
            coeffs: vec![DMatrix::zeros(dim, dim); order],
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    /// The `pr × pr` companion matrix of the recursion.
    pub fn companion(&self) -> DMatrix<f64> {
        let (r, p) = (self.dim(), self.order());
        let mut c = DMatrix::zeros(p * r, p * r);
        for (i, a) in self.coeffs.iter().enumerate() {
            c.view_mut((0, i * r), (r, r)).copy_from(a);
        }
        for i in r..p * r {
            c[(i, i - r)] = 1.0;
        }
        c
    }

    pub fn stability(&self) -> Stability {
        let c = self.companion();
        let radius = match Schur::try_new(c, f64::EPSILON, 10_000) {
            Some(schur) => schur
                .complex_eigenvalues()
                .iter()
                .map(|l| l.norm())
                .fold(0.0f64, f64::max),
            None => f64::INFINITY,
        };
        Stability {
            spectral_radius: radius,
            stable: radius < 1.0 - STABILITY_MARGIN,
        }
    }

    /// Scales every companion eigenvalue by `ρ` through `A_i ← ρ^i A_i`.
    pub fn scale_eigenvalues(&mut self, rho: f64) {
        let mut factor = 1.0;
        for a in &mut self.coeffs {
            factor *= rho;
            *a *= factor;
        }
    }

    /// Shrinks an unstable model to spectral radius [`SHRINK_TARGET`].
    /// Returns the factor applied, or `None` when the model was already stable.
    pub fn shrink_to_stable(&mut self) -> Option<f64> {
        let s = self.stability();
        if s.stable {
            return None;
        }
        let rho = SHRINK_TARGET / s.spectral_radius;
        self.scale_eigenvalues(rho);
        Some(rho)
    }

    /// One-step prediction residuals `e_t = z_t − Σ A_i z_{t−i}` for `t = p..T`.
    pub fn residuals(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (r, p) = (self.dim(), self.order());
        if z.nrows() != r {
            return Err(Error::mismatch("var", "state dimension", r, z.nrows()));
        }
        if z.ncols() <= p {
            return Err(Error::InsufficientSamples {
                module: "var",
                needed: p,
                found: z.ncols(),
            });
        }
        let mut e = z.columns(p, z.ncols() - p).into_owned();
        for (i, a) in self.coeffs.iter().enumerate() {
            let lagged = z.columns(p - 1 - i, z.ncols() - p);
            e.gemm(-1.0, a, &lagged, 1.0);
        }
        Ok(e)
    }

    /// Runs the recursion from `z_init` (p columns, oldest first) driven by
    /// `innovations`, discarding the first `burn_in` states.
    pub fn simulate(&self, innovations: &DMatrix<f64>, z_init: &DMatrix<f64>, burn_in: usize) -> Result<DMatrix<f64>> {
        let (r, p) = (self.dim(), self.order());
        let stability = self.stability();
        if !stability.stable {
            return Err(Error::numerical(
                "var",
                format!(
                    "unstable model: companion spectral radius {:.9}",
                    stability.spectral_radius
                ),
            ));
        }
        if innovations.nrows() != r {
            return Err(Error::mismatch("var", "innovation rows", r, innovations.nrows()));
        }
        if z_init.nrows() != r || z_init.ncols() != p {
            return Err(Error::mismatch("var", "initial state columns", p, z_init.ncols()));
        }
        if innovations.ncols() <= burn_in {
            return Err(Error::invalid("var", "burn-in consumes every innovation step"));
        }
        if innovations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("var", "non-finite innovation"));
        }

        let steps = innovations.ncols();
        let mut states = vec![0.0; r * (p + steps)];
        states[..r * p].copy_from_slice(z_init.as_slice());
        states[r * p..].copy_from_slice(innovations.as_slice());
        let coeffs: Vec<&[f64]> = self.coeffs.iter().map(|a| a.as_slice()).collect();
        for t in p..p + steps {
            let (history, rest) = states.split_at_mut(t * r);
            let current = &mut rest[..r];
            for (lag, a) in coeffs.iter().enumerate() {
                let prev = &history[(t - 1 - lag) * r..(t - lag) * r];
                // Column-major: a[j * r + i] = A[i, j].
                for (j, &pj) in prev.iter().enumerate() {
                    let col = &a[j * r..(j + 1) * r];
                    for (c, &aij) in current.iter_mut().zip(col) {
                        *c += aij * pj;
                    }
                }
            }
            if current.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical("var", format!("non-finite state at step {}", t - p)));
            }
        }
        let keep = steps - burn_in;
        Ok(DMatrix::from_column_slice(r, keep, &states[r * (p + burn_in)..]))
    }
}

/// Least-squares VAR(p) over regression targets `z_t`, `t ∈ start..T`.
fn ols(z: &DMatrix<f64>, p: usize, start: usize) -> Result<VarModel> {
    let (r, t_len) = z.shape();
    let n = t_len - start;
    let m = p * r;
    let mut design = DMatrix::zeros(n, m);
    let mut target = DMatrix::zeros(n, r);
    for row in 0..n {
        let t = start + row;
        for lag in 0..p {
            for j in 0..r {
                design[(row, lag * r + j)] = z[(j, t - 1 - lag)];
            }
        }
        for j in 0..r {
            target[(row, j)] = z[(j, t)];
        }
    }
    let scale = design.column_iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let qr = design.qr();
    let rmat = qr.r();
    let rank = (0..m).filter(|&i| rmat[(i, i)].abs() > RANK_TOL * scale).count();
    if rank < m || scale == 0.0 {
        return Err(Error::numerical(
            "var",
            format!("collinear lags: design rank {rank} of {m}"),
        ));
    }
    qr.q_tr_mul(&mut target);
    let top = target.rows(0, m).into_owned();
    let b = rmat
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::numerical("var", "collinear lags: singular triangular factor"))?;
    let coeffs = (0..p).map(|lag| b.rows(lag * r, r).transpose()).collect();
    VarModel::new(coeffs)
}

fn check_samples(z: &DMatrix<f64>, p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::invalid("var", "order must be at least 1"));
    }
    let needed = p * z.nrows() + p;
    if z.ncols() <= needed {
        return Err(Error::InsufficientSamples {
            module: "var",
            needed,
            found: z.ncols(),
        });
    }
    Ok(())
}

/// Fits a VAR(p) to an `r × T` coefficient series.
pub fn fit_var(z: &DMatrix<f64>, p: usize) -> Result<VarModel> {
    check_samples(z, p)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("var", "coefficient series contains non-finite values"));
    }
    ols(z, p, p)
}

/// Picks the order in `1..=max_order` minimizing the Bayesian information
/// criterion, all candidates scored on the same regression sample.
/// Returns the chosen order and the score of every candidate.
pub fn select_order_bic(z: &DMatrix<f64>, max_order: usize) -> Result<(usize, Vec<f64>)> {
    check_samples(z, max_order)?;
    let r = z.nrows() as f64;
    let n = (z.ncols() - max_order) as f64;
    let mut scores = Vec::with_capacity(max_order);
    for p in 1..=max_order {
        let score = match ols(z, p, max_order) {
            Ok(model) => {
                let e = model
                    .residuals(z)?
                    .columns(max_order - p, z.ncols() - max_order)
                    .into_owned();
                let sigma = (&e * e.transpose()) / n;
                match Cholesky::new(sigma) {
                    Some(ch) => {
                        let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                        logdet + n.ln() * p as f64 * r * r / n
                    }
                    None => f64::INFINITY,
                }
            }
            Err(_) => f64::INFINITY,
        };
        scores.push(score);
    }
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i + 1)
        .unwrap_or(1);
    Ok((best, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(r: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn ar1_coefficient_recovered() {
        let model = VarModel::new(vec![DMatrix::from_element(1, 1, 0.5)]).unwrap();
        let z = model
            .simulate(&noise(1, 20_200, 1), &DMatrix::zeros(1, 1), 200)
            .unwrap();
        let fit = fit_var(&z, 1).unwrap();
        assert!((fit.coeffs[0][(0, 0)] - 0.5).abs() < 0.02, "{}", fit.coeffs[0]);
    }

    #[test]
    fn white_noise_gives_small_coefficients() {
        let fit = fit_var(&noise(3, 20_000, 2), 1).unwrap();
        assert!(fit.coeffs[0].amax() < 0.05);
    }

    #[test]
    fn insufficient_samples_and_bad_order() {
        let z = noise(3, 10, 3);
        let err = fit_var(&z, 3).unwrap_err();
        assert!(err.to_string().contains("insufficient samples"));
        assert_eq!(err.exit_code(), 3);
        assert!(fit_var(&z, 0).is_err());
    }

    #[test]
    fn collinear_lags_reported() {
        let row = noise(1, 200, 4);
        let mut z = DMatrix::zeros(2, 200);
        z.row_mut(0).copy_from(&row.row(0));
        z.row_mut(1).copy_from(&(row.row(0) * 2.0));
        let err = fit_var(&z, 1).unwrap_err();
        assert!(err.to_string().contains("collinear lags"), "{err}");
        assert!(err.to_string().contains("rank 1 of 2"), "{err}");
    }

    #[test]
    fn stability_of_diagonal_models() {
        let half = VarModel::new(vec![DMatrix::identity(3, 3) * 0.5]).unwrap();
        let s = half.stability();
        assert!((s.spectral_radius - 0.5).abs() < 1e-12 && s.stable);
        let unit = VarModel::new(vec![DMatrix::identity(3, 3)]).unwrap();
        let s = unit.stability();
        assert!((s.spectral_radius - 1.0).abs() < 1e-12 && !s.stable);
    }

    #[test]
    fn shrinkage_reaches_target_radius() {
        let mut m = VarModel::new(vec![
            DMatrix::from_row_slice(2, 2, &[0.9, 0.3, -0.2, 0.8]),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.2]),
        ])
        .unwrap();
        let before = m.stability();
        assert!(!before.stable);
        let rho = m.shrink_to_stable().unwrap();
        let after = m.stability();
        assert!(
            (after.spectral_radius - SHRINK_TARGET).abs() < 1e-9,
            "{}",
            after.spectral_radius
        );
        assert!(after.stable);
        assert!((rho - SHRINK_TARGET / before.spectral_radius).abs() < 1e-15);
        assert!(m.shrink_to_stable().is_none());
    }

    #[test]
    fn residuals_of_zero_model_are_the_signal() {
        let z = noise(2, 30, 5);
        let e = VarModel::zeros(2, 3).residuals(&z).unwrap();
        assert_eq!(e, z.columns(3, 27).into_owned());
    }

    #[test]
    fn noiseless_data_has_zero_residuals() {
        let m = VarModel::new(vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3])]).unwrap();
        let mut innov = DMatrix::zeros(2, 50);
        innov[(0, 0)] = 1.0;
        let z = m
            .simulate(&innov, &DMatrix::from_column_slice(2, 1, &[0.3, -1.0]), 0)
            .unwrap();
        assert!(m.residuals(&z).unwrap().amax() < 1e-15);
    }

    #[test]
    fn zero_innovations_zero_output() {
        let m = VarModel::new(vec![DMatrix::identity(2, 2) * 0.3]).unwrap();
        let out = m.simulate(&DMatrix::zeros(2, 10), &DMatrix::zeros(2, 1), 2).unwrap();
        assert_eq!(out.shape(), (2, 8));
        assert_eq!(out.amax(), 0.0);
    }

    #[test]
    fn simulate_refuses_unstable_and_bad_input() {
        let unit = VarModel::new(vec![DMatrix::identity(1, 1)]).unwrap();
        let err = unit.simulate(&noise(1, 10, 1), &DMatrix::zeros(1, 1), 0).unwrap_err();
        assert!(err.to_string().contains("unstable"));
        let m = VarModel::new(vec![DMatrix::identity(1, 1) * 0.5]).unwrap();
        let mut bad = noise(1, 10, 1);
        bad[(0, 3)] = f64::NAN;
        assert!(m.simulate(&bad, &DMatrix::zeros(1, 1), 0).is_err());
        assert!(m.simulate(&noise(2, 10, 1), &DMatrix::zeros(1, 1), 0).is_err());
    }

    #[test]
    fn ar1_stationary_variance() {
        let m = VarModel::new(vec![DMatrix::from_element(1, 1, 0.9)]).unwrap();
        let z = m.simulate(&noise(1, 200_200, 7), &DMatrix::zeros(1, 1), 200).unwrap();
        let var = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
        let expect = 1.0 / (1.0 - 0.81);
        assert!((var - expect).abs() < 0.1 * expect, "{var}");
    }

    #[test]
    fn bic_picks_true_order() {
        let m = VarModel::new(vec![
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]),
            DMatrix::from_row_slice(2, 2, &[-0.3, 0.0, 0.1, -0.25]),
        ])
        .unwrap();
        let z = m.simulate(&noise(2, 10_200, 8), &DMatrix::zeros(2, 2), 200).unwrap();
        let (p, scores) = select_order_bic(&z, 6).unwrap();
        assert_eq!(p, 2, "{scores:?}");
        assert_eq!(scores.len(), 6);
    }
}
