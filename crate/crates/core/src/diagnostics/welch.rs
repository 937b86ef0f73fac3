//! Welch temporal power spectral density.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::series::WavefrontSeries;

pub const MIN_SEGMENT_LEN: usize = 8;
pub const DEFAULT_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchParams {
    pub segment_len: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap: f64,
}

fn prev_pow2(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

/// `2^⌊log2(n/8)⌋`, at least 64, but never longer than the signal itself.
pub fn default_segment_len(n: usize) -> usize {
    let seg = prev_pow2(n / 8).max(64);
    if seg > n {
        prev_pow2(n)
    } else {
        seg
    }
}

impl WelchParams {
    pub fn for_length(n: usize) -> Self {
        WelchParams {
            segment_len: default_segment_len(n),
            overlap: DEFAULT_OVERLAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_len < MIN_SEGMENT_LEN {
            return Err(Error::invalid(
                "diagnostics",
                format!(
                    "segment length must be at least {MIN_SEGMENT_LEN}, got {}",
                    self.segment_len
                ),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::invalid(
                "diagnostics",
                format!("overlap must lie in [0, 1), got {}", self.overlap),
            ));
        }
        Ok(())
    }

    fn step(&self) -> usize {
        let shared = (self.overlap * self.segment_len as f64).round() as usize;
        (self.segment_len - shared).max(1)
    }
}

/// One-sided power spectral density on `f = df, 2·df, …, fs/2`.
///
/// The DC bin is left out; `power` is in units of the analyzed quantity
/// squared per Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct TpsdCurve {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub df: f64,
}

impl TpsdCurve {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// `Σ S(f)·df`: the variance the curve accounts for.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df
    }

    pub fn scaled(&self, factor: f64) -> TpsdCurve {
        TpsdCurve {
            power: self.power.iter().map(|p| p * factor).collect(),
            ..self.clone()
        }
    }
}

/// Reusable Welch estimator: Hann window, per-segment mean removal,
/// density scaling so that `Σ S·df` matches the signal variance.
pub struct Welch {
    params: WelchParams,
    dt: f64,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    window_power: f64,
}

impl Welch {
    pub fn new(params: WelchParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("diagnostics", format!("dt must be positive, got {dt}")));
        }
        let n = params.segment_len;
        // Periodic Hann.
        let window: Vec<f64> = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Welch {
            params,
            dt,
            window,
            fft,
            window_power,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.params.segment_len / 2
    }

    pub fn df(&self) -> f64 {
        1.0 / (self.params.segment_len as f64 * self.dt)
    }

    pub fn freqs(&self) -> Vec<f64> {
        let df = self.df();
        (1..=self.n_bins()).map(|k| k as f64 * df).collect()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n < self.params.segment_len {
            return Err(Error::InsufficientSamples {
                module: "diagnostics",
                needed: self.params.segment_len - 1,
                found: n,
            });
        }
        Ok(())
    }

    /// Adds `weight × S(f)` of `signal` into `acc` (length [`Welch::n_bins`]).
    pub fn accumulate(&self, signal: &[f64], weight: f64, acc: &mut [f64], buf: &mut Vec<Complex<f64>>) -> Result<()> {
        self.check_len(signal.len())?;
        let seg = self.params.segment_len;
        let step = self.params.step();
        let n_segments = (signal.len() - seg) / step + 1;
        let scale = weight * 2.0 * self.dt / (self.window_power * n_segments as f64);
        let nyquist = seg.is_multiple_of(2);
        buf.resize(seg, Complex::new(0.0, 0.0));
        for s in 0..n_segments {
            let chunk = &signal[s * step..s * step + seg];
            let mean = chunk.iter().sum::<f64>() / seg as f64;
            for ((b, &x), &w) in buf.iter_mut().zip(chunk).zip(&self.window) {
                *b = Complex::new((x - mean) * w, 0.0);
            }
            self.fft.process(buf);
            for (k, a) in acc.iter_mut().enumerate() {
                let bin = k + 1;
                let mut p = buf[bin].norm_sqr() * scale;
                if nyquist && bin == seg / 2 {
                    p *= 0.5;
                }
                *a += p;
            }
        }
        Ok(())
    }

    pub fn estimate(&self, signal: &[f64]) -> Result<TpsdCurve> {
        let mut power = vec![0.0; self.n_bins()];
        self.accumulate(signal, 1.0, &mut power, &mut Vec::new())?;
        Ok(TpsdCurve {
            freqs: self.freqs(),
            power,
            df: self.df(),
        })
    }
}

pub fn welch_psd(signal: &[f64], dt: f64, params: WelchParams) -> Result<TpsdCurve> {
    Welch::new(params, dt)?.estimate(signal)
}

/// Average of the per-pixel TPSDs over every in-mask pixel.
pub fn aggregate_tpsd(series: &WavefrontSeries, params: WelchParams) -> Result<TpsdCurve> {
    let pixels = series.geometry.valid_pixels();
    if pixels.is_empty() {
        return Err(Error::invalid("diagnostics", "empty mask"));
    }
    let welch = Welch::new(params, series.geometry.dt)?;
    let weight = 1.0 / pixels.len() as f64;
    let mut acc = vec![0.0; welch.n_bins()];
    let mut buf = Vec::new();
    for &(y, x) in &pixels {
        welch.accumulate(&series.pixel_series(y, x), weight, &mut acc, &mut buf)?;
    }
    Ok(TpsdCurve {
        freqs: welch.freqs(),
        power: acc,
        df: welch.df(),
    })
}

/// Boxcar average in `log10 f` of full width `width_decades`.
pub fn smooth_log_boxcar(freqs: &[f64], power: &[f64], width_decades: f64) -> Vec<f64> {
    let half = width_decades / 2.0;
    let logs: Vec<f64> = freqs.iter().map(|f| f.log10()).collect();
    let mut prefix = Vec::with_capacity(power.len() + 1);
    prefix.push(0.0);
    for p in power {
        prefix.push(prefix.last().unwrap() + p);
    }
    let (mut lo, mut hi) = (0usize, 0usize);
    logs.iter()
        .map(|&l| {
            while logs[lo] < l - half {
                lo += 1;
            }
            while hi < logs.len() && logs[hi] <= l + half {
                hi += 1;
            }
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Geometry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn default_segment_rule() {
        assert_eq!(default_segment_len(8192), 1024);
        assert_eq!(default_segment_len(1000), 64);
        assert_eq!(default_segment_len(40), 32);
        assert_eq!(default_segment_len(100_000), 8192);
    }

    #[test]
    fn sinusoid_power_is_half_amplitude_squared() {
        let (dt, seg) = (1e-3, 256);
        let f0 = 20.0 / (seg as f64 * dt);
        let a = 3.0;
        let signal: Vec<f64> = (0..8192)
            .map(|i| a * (2.0 * std::f64::consts::PI * f0 * i as f64 * dt).sin())
            .collect();
        let c = welch_psd(
            &signal,
            dt,
            WelchParams {
                segment_len: seg,
                overlap: 0.5,
            },
        )
        .unwrap();
        let total = c.total_power();
        assert!((total - a * a / 2.0).abs() < 0.03 * a * a / 2.0, "{total}");
    }

    #[test]
    fn white_noise_level() {
        let (dt, sigma) = (0.01, 2.0);
        let c = welch_psd(
            &white(200_000, sigma, 1),
            dt,
            WelchParams {
                segment_len: 512,
                overlap: 0.5,
            },
        )
        .unwrap();
        let level = c.power[..c.len() - 1].iter().sum::<f64>() / (c.len() - 1) as f64;
        let expect = sigma * sigma * 2.0 * dt;
        assert!((level - expect).abs() < 0.05 * expect, "{level} vs {expect}");
        assert!(c.power.iter().all(|&p| p >= 0.0));
        assert!(c.freqs.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(c.freqs[0], c.df);
    }

    #[test]
    fn zero_signal_zero_curve_and_short_signal_error() {
        let c = welch_psd(
            &[0.0; 128],
            1.0,
            WelchParams {
                segment_len: 64,
                overlap: 0.5,
            },
        )
        .unwrap();
        assert!(c.power.iter().all(|&p| p == 0.0));
        assert!(welch_psd(
            &[0.0; 32],
            1.0,
            WelchParams {
                segment_len: 64,
                overlap: 0.5
            }
        )
        .is_err());
        assert!(welch_psd(
            &[0.0; 32],
            1.0,
            WelchParams {
                segment_len: 4,
                overlap: 0.5
            }
        )
        .is_err());
        assert!(welch_psd(
            &[0.0; 32],
            1.0,
            WelchParams {
                segment_len: 8,
                overlap: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn uniform_series_aggregate_equals_single_pixel() {
        let s = white(1024, 1.0, 3);
        let g = Geometry::circular(4, 4, 0.5, 1.0);
        let npix = g.n_pixels();
        let frames: Vec<f64> = (0..1024 * npix).map(|i| s[i / npix]).collect();
        let series = WavefrontSeries::new(g, 1024, frames, "").unwrap();
        let p = WelchParams {
            segment_len: 128,
            overlap: 0.5,
        };
        let agg = aggregate_tpsd(&series, p).unwrap();
        let one = welch_psd(&s, 0.5, p).unwrap();
        for (a, b) in agg.power.iter().zip(&one.power) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn two_independent_pixels_average_their_levels() {
        let n = 100_000;
        let (a, b) = (white(n, 1.0, 4), white(n, 2.0, 5));
        let mut g = Geometry::full(2, 2, 0.1, 1.0);
        g.mask = vec![true, true, false, false];
        let frames: Vec<f64> = (0..n).flat_map(|t| [a[t], b[t], 0.0, 0.0]).collect();
        let series = WavefrontSeries::new(g, n, frames, "").unwrap();
        let c = aggregate_tpsd(
            &series,
            WelchParams {
                segment_len: 256,
                overlap: 0.5,
            },
        )
        .unwrap();
        let level = c.power[..c.len() - 1].iter().sum::<f64>() / (c.len() - 1) as f64;
        let expect = (1.0 + 4.0) / 2.0 * 2.0 * 0.1;
        assert!((level - expect).abs() < 0.05 * expect, "{level} vs {expect}");
    }

    #[test]
    fn empty_mask_rejected() {
        let mut g = Geometry::full(2, 2, 1.0, 1.0);
        g.mask = vec![false; 4];
        let s = WavefrontSeries::zeros(g, 64, "").unwrap();
        assert!(aggregate_tpsd(&s, WelchParams::for_length(64)).is_err());
    }

    #[test]
    fn boxcar_of_constant_is_constant() {
        let f: Vec<f64> = (1..=100).map(|k| k as f64).collect();
        let out = smooth_log_boxcar(&f, &vec![2.5; 100], 1.0 / 6.0);
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        // At f = 100 the window spans 10^(±1/12): bins 83..=100.
        let ramp: Vec<f64> = f.clone();
        let s = smooth_log_boxcar(&f, &ramp, 1.0 / 6.0);
        let lo = (100.0 * 10f64.powf(-1.0 / 12.0)).ceil();
        let expect = (lo + 100.0) / 2.0;
        assert!((s[99] - expect).abs() < 1e-9, "{} vs {expect}", s[99]);
    }
}
