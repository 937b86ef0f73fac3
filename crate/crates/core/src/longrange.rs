//! Long-range temporal correction of synthesized mode coefficients.
//!
//! The VAR recursion only remembers `p` steps. To carry the training
//! spectrum below the VAR's effective memory, each leading whitened mode
//! of a synthetic run is passed through a zero-phase spectral gain
//! `G(f) = sqrt(S_target(f) / S_current(f))`, where both spectra are Welch
//! estimates smoothed with the same log-frequency boxcar. Phases are kept,
//! and the mode variance is restored exactly afterwards.

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::diagnostics::{smooth_log_boxcar, Welch, WelchParams, MIN_SEGMENT_LEN};
use crate::error::{Error, Result};

/// Full width of the log-frequency smoothing window, in decades.
pub const SMOOTHING_DECADES: f64 = 1.0 / 6.0;
pub const DEFAULT_K_MODES: usize = 10;

/// Smoothed training TPSD of the leading modes on their native Welch grid
/// (`f = j / segment_len` cycles per sample, `j = 1..=segment_len/2`).
#[derive(Debug, Clone, PartialEq)]
pub struct LongRangeSpectra {
    pub params: WelchParams,
    /// One row of `segment_len / 2` values per corrected mode.
    pub spectra: Vec<Vec<f64>>,
}

/// Target amplitude spectra resampled onto the FFT grid of a run of
/// `n` samples (`n/2 + 1` one-sided bins, DC included).
#[derive(Debug, Clone, PartialEq)]
pub struct LongRangeFilterBank {
    pub n: usize,
    pub params: WelchParams,
    pub targets: Vec<Vec<f64>>,
}

fn smoothed_psd(signal: &[f64], params: WelchParams) -> Result<Vec<f64>> {
    let curve = Welch::new(params, 1.0)?.estimate(signal)?;
    Ok(smooth_log_boxcar(&curve.freqs, &curve.power, SMOOTHING_DECADES))
}

/// Log-log interpolation of a spectrum given on `j / seg`, held flat outside.
fn resample(spectrum: &[f64], seg: usize, n: usize) -> Vec<f64> {
    let last = spectrum.len() - 1;
    (0..=n / 2)
        .map(|k| {
            let pos = k as f64 * seg as f64 / n as f64; // fractional Welch bin, 1-based
            if pos <= 1.0 {
                return spectrum[0];
            }
            if pos >= (last + 1) as f64 {
                return spectrum[last];
            }
            let j = pos.floor() as usize; // spectrum[j - 1] sits at bin j
            let (a, b) = (spectrum[j - 1], spectrum[j]);
            if j as f64 == pos {
                return a;
            }
            if a > 0.0 && b > 0.0 {
                let t = (pos / j as f64).ln() / ((j + 1) as f64 / j as f64).ln();
                (a.ln() + t * (b.ln() - a.ln())).exp()
            } else {
                a + (pos - j as f64) * (b - a)
            }
        })
        .collect()
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

impl LongRangeSpectra {
    /// Welch spectra of the first `k_modes` rows of a training coefficient series.
    pub fn fit(z: &DMatrix<f64>, k_modes: usize, params: WelchParams) -> Result<Self> {
        if k_modes > z.nrows() {
            return Err(Error::invalid(
                "longrange",
                format!("k_modes {k_modes} exceeds the {} available modes", z.nrows()),
            ));
        }
        params.validate()?;
        if z.ncols() < params.segment_len {
            return Err(Error::InsufficientSamples {
                module: "longrange",
                needed: params.segment_len - 1,
                found: z.ncols(),
            });
        }
        let spectra = (0..k_modes)
            .map(|m| {
                let row: Vec<f64> = z.row(m).iter().copied().collect();
                smoothed_psd(&row, params)
            })
            .collect::<Result<_>>()?;
        Ok(LongRangeSpectra { params, spectra })
    }

    pub fn k_modes(&self) -> usize {
        self.spectra.len()
    }

    pub fn on_grid(&self, n: usize) -> LongRangeFilterBank {
        LongRangeFilterBank {
            n,
            params: self.params,
            targets: self
                .spectra
                .iter()
                .map(|s| resample(s, self.params.segment_len, n))
                .collect(),
        }
    }
}

/// Builds the filter bank for a run of `n_target` samples from the
/// training coefficients `z_train` (default Welch segmentation).
pub fn fit_longrange(z_train: &DMatrix<f64>, k_modes: usize, n_target: usize) -> Result<LongRangeFilterBank> {
    let params = WelchParams::for_length(z_train.ncols());
    Ok(LongRangeSpectra::fit(z_train, k_modes, params)?.on_grid(n_target))
}

/// Reshapes the leading `bank.targets.len()` rows of `z` in place.
pub fn apply_longrange(bank: &LongRangeFilterBank, z: &mut DMatrix<f64>) -> Result<()> {
    if bank.targets.is_empty() {
        return Ok(());
    }
    let n = z.ncols();
    if n != bank.n {
        return Err(Error::mismatch("longrange", "filter-bank grid length", bank.n, n));
    }
    if bank.targets.len() > z.nrows() {
        return Err(Error::mismatch(
            "longrange",
            "corrected modes",
            z.nrows(),
            bank.targets.len(),
        ));
    }
    if n < MIN_SEGMENT_LEN {
        warn!("longrange: {n} samples is too short for a spectral correction, skipped");
        return Ok(());
    }
    let seg = bank.params.segment_len.min(1 << (usize::BITS - 1 - n.leading_zeros()));
    let params = WelchParams {
        segment_len: seg,
        overlap: bank.params.overlap,
    };

    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut row = vec![0.0; n];
    for (m, target) in bank.targets.iter().enumerate() {
        for (r, v) in row.iter_mut().zip(z.row(m).iter()) {
            *r = *v;
        }
        let var_before = variance(&row);
        if var_before == 0.0 {
            continue;
        }
        let current = resample(&smoothed_psd(&row, params)?, seg, n);
        let gain: Vec<f64> = target
            .iter()
            .zip(&current)
            .map(|(&t, &c)| if c > 0.0 { (t.max(0.0) / c).sqrt() } else { 0.0 })
            .collect();

        for (b, &x) in buf.iter_mut().zip(&row) {
            *b = Complex::new(x, 0.0);
        }
        forward.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            *b *= gain[k.min(n - k)];
        }
        inverse.process(&mut buf);
        for (r, b) in row.iter_mut().zip(&buf) {
            *r = b.re / n as f64;
        }
        let var_after = variance(&row);
        let scale = if var_after > 0.0 {
            (var_before / var_after).sqrt()
        } else {
            0.0
        };
        for (t, r) in row.iter().enumerate() {
            z[(m, t)] = r * scale;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::welch_psd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(r: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn ar1(a: f64, n: usize, seed: u64) -> DMatrix<f64> {
        let e = white(1, n + 500, seed);
        let mut z = DMatrix::zeros(1, n);
        let mut s = 0.0;
        for t in 0..n + 500 {
            s = a * s + e[(0, t)];
            if t >= 500 {
                z[(0, t - 500)] = s;
            }
        }
        z
    }

    fn ar1_shape(a: f64, f: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f;
        1.0 / (1.0 - 2.0 * a * w.cos() + a * a)
    }

    #[test]
    fn white_mode_target_is_nearly_flat() {
        // 1024-sample segments give ~127 averages; with the default T/8
        // segmentation the barely smoothed lowest bins scatter too much.
        let n = 65_536;
        let params = WelchParams {
            segment_len: 1024,
            overlap: 0.5,
        };
        for seed in 1..=5 {
            let bank = LongRangeSpectra::fit(&white(1, n, seed), 1, params).unwrap().on_grid(n);
            let t = &bank.targets[0];
            let (lo, hi) = t.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            assert!(hi / lo < 2.0, "seed {seed}: {}", hi / lo);
            assert_eq!(t.len(), n / 2 + 1);
        }
    }

    #[test]
    fn ar1_target_matches_analytic_shape_mid_band() {
        let n = 65_536;
        let bank = fit_longrange(&ar1(0.9, n, 2), 1, n).unwrap();
        let t = &bank.targets[0];
        let mid: Vec<usize> = (0..=n / 2)
            .filter(|&k| {
                let f = k as f64 / n as f64;
                (0.01..=0.125).contains(&f)
            })
            .collect();
        let ratios: Vec<f64> = mid
            .iter()
            .map(|&k| t[k] / ar1_shape(0.9, k as f64 / n as f64))
            .collect();
        let norm = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let worst = ratios.iter().map(|r| (r / norm - 1.0).abs()).fold(0.0f64, f64::max);
        assert!(worst < 0.2, "{worst}");
    }

    #[test]
    fn zero_modes_is_identity() {
        let z0 = white(3, 512, 3);
        let mut z = z0.clone();
        let bank = fit_longrange(&z0, 0, 512).unwrap();
        apply_longrange(&bank, &mut z).unwrap();
        assert_eq!(z, z0);
    }

    #[test]
    fn own_spectrum_is_a_fixed_point() {
        let z0 = ar1(0.95, 16_384, 4);
        let mut z = z0.clone();
        let bank = fit_longrange(&z0, 1, z0.ncols()).unwrap();
        apply_longrange(&bank, &mut z).unwrap();
        let rms = ((&z - &z0).norm_squared() / z0.norm_squared()).sqrt();
        assert!(rms < 0.05, "{rms}");
    }

    #[test]
    fn shapes_white_noise_into_target_and_keeps_variance() {
        let n = 65_536;
        let bank = fit_longrange(&ar1(0.9, n, 5), 1, n).unwrap();
        let mut z = white(2, n, 6);
        let before: Vec<f64> = (0..2)
            .map(|m| variance(&z.row(m).iter().copied().collect::<Vec<_>>()))
            .collect();
        let untouched = z.row(1).into_owned();
        apply_longrange(&bank, &mut z).unwrap();
        let row: Vec<f64> = z.row(0).iter().copied().collect();
        assert!(((variance(&row) - before[0]) / before[0]).abs() < 1e-10);
        assert_eq!(z.row(1), untouched);

        let psd = welch_psd(&row, 1.0, WelchParams::for_length(n)).unwrap();
        let ratios: Vec<f64> = psd
            .freqs
            .iter()
            .zip(&psd.power)
            .filter(|(f, _)| (0.01..=0.125).contains(*f))
            .map(|(&f, &p)| p / ar1_shape(0.9, f))
            .collect();
        let norm = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let smoothed: Vec<f64> = ratios
            .chunks(16)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64 / norm)
            .collect();
        let worst = smoothed.iter().map(|r| (r - 1.0).abs()).fold(0.0f64, f64::max);
        assert!(worst < 0.2, "{worst}");
    }

    #[test]
    fn errors() {
        let z = white(2, 100, 7);
        assert!(fit_longrange(&z, 3, 100).is_err());
        assert!(LongRangeSpectra::fit(
            &z,
            1,
            WelchParams {
                segment_len: 128,
                overlap: 0.5
            }
        )
        .is_err());
        let bank = fit_longrange(&white(1, 256, 8), 1, 256).unwrap();
        let mut wrong = white(1, 300, 9);
        assert!(apply_longrange(&bank, &mut wrong).is_err());
    }

    #[test]
    fn resample_is_exact_on_grid_and_flat_outside() {
        let s = vec![4.0, 2.0, 1.0, 0.5];
        let g = resample(&s, 8, 8);
        assert_eq!(g, vec![4.0, 4.0, 2.0, 1.0, 0.5]);
        let fine = resample(&s, 8, 16);
        assert_eq!(fine[2], 4.0);
        assert!((fine[3] - (4.0f64.ln() + (1.5f64).ln() / 2f64.ln() * (2f64.ln() - 4f64.ln())).exp()).abs() < 1e-12);
    }
}
