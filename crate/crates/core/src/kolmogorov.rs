//! Angular-spectrum Kolmogorov / von Kármán phase screens, the classical
//! baseline for synthetic wavefront data.
//!
//! The phase PSD is evaluated in cycles per meter,
//! `Φ(f) = 0.023 r0^(-5/3) (f² + f0²)^(-11/6) exp(-f²/fm²)` with
//! `f0 = 1/L0` and `fm = 5.92 / (2π l0)`. A square FFT grid of side `N·dx`
//! cannot represent scales beyond its own size, so the lowest frequencies are
//! optionally filled in with 3×3 subharmonic grids, each level three times finer.

use std::f64::consts::PI;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::series::{Geometry, WavefrontSeries};

pub const DEFAULT_WAVELENGTH: f64 = 532e-9;
pub const DEFAULT_SUBHARMONIC_LEVELS: usize = 5;
/// Widest screen `frozen_flow_series` will allocate.
pub const MAX_SCREEN_WIDTH: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbulenceParams {
    /// Fried parameter (m).
    pub r0: f64,
    /// Outer scale (m); `f64::INFINITY` for pure Kolmogorov.
    pub outer_scale: f64,
    /// Inner scale (m); 0 disables the high-frequency roll-off.
    pub inner_scale: f64,
    /// Grid side, a power of two ≥ 16.
    pub n: usize,
    pub dx: f64,
    pub subharmonic_levels: usize,
}

impl TurbulenceParams {
    pub fn kolmogorov(r0: f64, n: usize, dx: f64) -> Self {
        TurbulenceParams {
            r0,
            outer_scale: f64::INFINITY,
            inner_scale: 0.0,
            n,
            dx,
            subharmonic_levels: DEFAULT_SUBHARMONIC_LEVELS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("kolmogorov", reason));
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return bad(format!("r0 must be positive and finite, got {}", self.r0));
        }
        if !(self.inner_scale >= 0.0 && self.inner_scale.is_finite()) {
            return bad(format!(
                "inner scale must be finite and non-negative, got {}",
                self.inner_scale
            ));
        }
        if !(self.outer_scale > self.inner_scale) {
            return bad(format!(
                "outer scale {} must exceed inner scale {}",
                self.outer_scale, self.inner_scale
            ));
        }
        if self.n < 16 || !self.n.is_power_of_two() {
            return bad(format!("grid size must be a power of two >= 16, got {}", self.n));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return bad(format!("dx must be positive and finite, got {}", self.dx));
        }
        Ok(())
    }

    /// Phase PSD in rad² per (cycle/m)² at radial frequency `f` (cycles/m).
    pub fn phase_psd(&self, f: f64) -> f64 {
        let f0 = if self.outer_scale.is_finite() {
            1.0 / self.outer_scale
        } else {
            0.0
        };
        let f2 = f * f + f0 * f0;
        if f2 == 0.0 {
            return 0.0;
        }
        let roll_off = if self.inner_scale > 0.0 {
            let fm = 5.92 / (2.0 * PI * self.inner_scale);
            (-(f * f) / (fm * fm)).exp()
        } else {
            1.0
        };
        0.023 * self.r0.powf(-5.0 / 3.0) * f2.powf(-11.0 / 6.0) * roll_off
    }

    /// Theoretical Kolmogorov structure function `6.88 (r/r0)^(5/3)`.
    pub fn structure_function(&self, r: f64) -> f64 {
        6.88 * (r / self.r0).powf(5.0 / 3.0)
    }
}

/// Row-major phase map in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScreen {
    pub rows: usize,
    pub cols: usize,
    pub dx: f64,
    pub data: Vec<f64>,
}

impl PhaseScreen {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.cols + x]
    }

    pub fn rms(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64).sqrt()
    }
}

fn complex_normal(rng: &mut ChaCha20Rng) -> Complex<f64> {
    Complex::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Signed FFT frequency index of bin `k` on an `n`-point grid.
fn signed(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Screen on a `rows × cols` periodic grid with the PSD of `params`.
fn generate_rect(params: &TurbulenceParams, rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> PhaseScreen {
    let dfx = 1.0 / (cols as f64 * params.dx);
    let dfy = 1.0 / (rows as f64 * params.dx);
    let cell = (dfx * dfy).sqrt();

    let mut spec = vec![Complex::new(0.0, 0.0); rows * cols];
    for ky in 0..rows {
        let fy = signed(ky, rows) * dfy;
        for kx in 0..cols {
            let fx = signed(kx, cols) * dfx;
            let c = complex_normal(rng);
            if kx == 0 && ky == 0 {
                continue;
            }
            let f = (fx * fx + fy * fy).sqrt();
            spec[ky * cols + kx] = c * (params.phase_psd(f).sqrt() * cell);
        }
    }

    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_inverse(cols);
    for row in spec.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_inverse(rows);
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for x in 0..cols {
        for y in 0..rows {
            column[y] = spec[y * cols + x];
        }
        col_fft.process(&mut column);
        for y in 0..rows {
            spec[y * cols + x] = column[y];
        }
    }
    let mut data: Vec<f64> = spec.iter().map(|c| c.re).collect();

    if params.subharmonic_levels > 0 {
        let mut low = vec![0.0; rows * cols];
        let mut ex = vec![Complex::new(0.0, 0.0); cols];
        let mut ey = vec![Complex::new(0.0, 0.0); rows];
        for level in 1..=params.subharmonic_levels {
            let scale = 3f64.powi(level as i32);
            let (sx, sy) = (dfx / scale, dfy / scale);
            let amp_cell = (sx * sy).sqrt();
            for my in -1i32..=1 {
                for mx in -1i32..=1 {
                    let c = complex_normal(rng);
                    if mx == 0 && my == 0 {
                        continue;
                    }
                    let (fx, fy) = (mx as f64 * sx, my as f64 * sy);
                    let a = c * (params.phase_psd((fx * fx + fy * fy).sqrt()).sqrt() * amp_cell);
                    for (x, e) in ex.iter_mut().enumerate() {
                        *e = Complex::from_polar(1.0, 2.0 * PI * fx * x as f64 * params.dx);
                    }
                    for (y, e) in ey.iter_mut().enumerate() {
                        *e = Complex::from_polar(1.0, 2.0 * PI * fy * y as f64 * params.dx);
                    }
                    for y in 0..rows {
                        let ay = a * ey[y];
                        for x in 0..cols {
                            low[y * cols + x] += (ay * ex[x]).re;
                        }
                    }
                }
            }
        }
        let mean = low.iter().sum::<f64>() / low.len() as f64;
        for (d, l) in data.iter_mut().zip(&low) {
            *d += l - mean;
        }
    }

    PhaseScreen {
        rows,
        cols,
        dx: params.dx,
        data,
    }
}

/// One `N × N` phase screen (radians), deterministic per seed.
pub fn generate_screen(params: &TurbulenceParams, seed: u64) -> Result<PhaseScreen> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(generate_rect(params, params.n, params.n, &mut rng))
}

/// Taylor frozen flow: a long screen advected in `+x` at `velocity`,
/// sampled by an `N × N` window every `dt`. Sub-pixel shifts are linearly
/// interpolated; values are OPD in meters at `wavelength`.
pub fn frozen_flow_series(
    params: &TurbulenceParams,
    velocity: f64,
    dt: f64,
    n_steps: usize,
    wavelength: f64,
    seed: u64,
) -> Result<WavefrontSeries> {
    params.validate()?;
    if !(velocity >= 0.0 && velocity.is_finite()) {
        return Err(Error::invalid(
            "kolmogorov",
            format!("velocity must be finite and >= 0, got {velocity}"),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) || !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::invalid(
            "kolmogorov",
            "dt and wavelength must be positive and finite",
        ));
    }
    if n_steps == 0 {
        return Err(Error::invalid("kolmogorov", "steps must be at least 1"));
    }
    let n = params.n;
    let shift = velocity * dt / params.dx; // pixels per step
    let travel = shift * (n_steps - 1) as f64;
    let needed = n as f64 + travel.ceil() + 1.0;
    if needed > MAX_SCREEN_WIDTH as f64 {
        return Err(Error::invalid(
            "kolmogorov",
            format!("translation exceeds screen width: need {needed} columns, limit {MAX_SCREEN_WIDTH}"),
        ));
    }
    let cols = (needed as usize).next_power_of_two();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let screen = generate_rect(params, n, cols, &mut rng);

    let to_opd = wavelength / (2.0 * PI);
    let geometry = Geometry::full(n, n, dt, params.dx);
    let mut frames = vec![0.0; n_steps * n * n];
    for t in 0..n_steps {
        let offset = shift * (n_steps - 1 - t) as f64;
        let base = offset.floor();
        let frac = offset - base;
        let base = base as usize;
        let frame = &mut frames[t * n * n..(t + 1) * n * n];
        for y in 0..n {
            let row = &screen.data[y * cols..(y + 1) * cols];
            for x in 0..n {
                let c = x + base;
                let v = if frac == 0.0 {
                    row[c]
                } else {
                    (1.0 - frac) * row[c] + frac * row[c + 1]
                };
                frame[y * n + x] = v * to_opd;
            }
        }
    }
    let mut series = WavefrontSeries::new(
        geometry,
        n_steps,
        frames,
        format!("kolmogorov r0={} seed={seed}", params.r0),
    )?;
    let meta = [
        ("r0", params.r0.to_string()),
        ("L0", params.outer_scale.to_string()),
        ("l0", params.inner_scale.to_string()),
        ("velocity", velocity.to_string()),
        ("wavelength", wavelength.to_string()),
        ("subharmonic_levels", params.subharmonic_levels.to_string()),
        ("seed", seed.to_string()),
    ];
    for (k, v) in meta {
        series.metadata.insert(k.to_string(), v);
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TurbulenceParams {
        TurbulenceParams::kolmogorov(0.1, 64, 0.01)
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        for bad in [
            TurbulenceParams { n: 48, ..params() },
            TurbulenceParams { n: 8, ..params() },
            TurbulenceParams { r0: 0.0, ..params() },
            TurbulenceParams {
                outer_scale: 0.01,
                inner_scale: 0.02,
                ..params()
            },
            TurbulenceParams { dx: -1.0, ..params() },
        ] {
            assert!(generate_screen(&bad, 0).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn deterministic_and_zero_mean() {
        let a = generate_screen(&params(), 5).unwrap();
        assert_eq!(a, generate_screen(&params(), 5).unwrap());
        assert_ne!(a, generate_screen(&params(), 6).unwrap());
        for levels in [0, 5] {
            let s = generate_screen(
                &TurbulenceParams {
                    subharmonic_levels: levels,
                    ..params()
                },
                9,
            )
            .unwrap();
            let mean = s.data.iter().sum::<f64>() / s.data.len() as f64;
            assert!(mean.abs() < 1e-10 * s.rms(), "{mean}");
        }
    }

    #[test]
    fn psd_limits() {
        let p = params();
        assert_eq!(p.phase_psd(0.0), 0.0);
        let ratio = p.phase_psd(1.0) / p.phase_psd(2.0);
        assert!((ratio - 2f64.powf(11.0 / 3.0)).abs() < 1e-9);
        let vk = TurbulenceParams {
            outer_scale: 10.0,
            inner_scale: 0.005,
            ..p
        };
        assert!(vk.phase_psd(0.0) > 0.0 && vk.phase_psd(0.0).is_finite());
        assert!(vk.phase_psd(200.0) < p.phase_psd(200.0));
    }

    #[test]
    fn frozen_flow_shapes() {
        let p = TurbulenceParams { n: 16, ..params() };
        let still = frozen_flow_series(&p, 0.0, 1e-3, 5, DEFAULT_WAVELENGTH, 1).unwrap();
        for t in 1..5 {
            assert_eq!(still.frame(t), still.frame(0));
        }
        // 2 px per step: frame t+1 is frame t moved right by two columns.
        let moving = frozen_flow_series(&p, 20.0, 1e-3, 6, DEFAULT_WAVELENGTH, 2).unwrap();
        for t in 0..5 {
            for y in 0..16 {
                for x in 0..14 {
                    assert_eq!(moving.get(t + 1, y, x + 2), moving.get(t, y, x));
                }
            }
        }
        let err = frozen_flow_series(&p, 1e6, 1.0, 10, DEFAULT_WAVELENGTH, 3).unwrap_err();
        assert!(err.to_string().contains("translation exceeds screen width"));
        assert!(frozen_flow_series(&p, -1.0, 1e-3, 5, DEFAULT_WAVELENGTH, 1).is_err());
    }
}
