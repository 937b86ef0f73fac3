//! A planted "TBL-like" training set: ten smooth aperture modes driven by
//! known linear dynamics, plus a little white pixel noise.
//!
//! Three damped rotations move cos/sin pairs of stream-wise waves
//! (convecting structures), one AR(2) mode oscillates and three AR(1)
//! modes span slow to fast decorrelation. All modes have unit variance and
//! broad, overlapping spectra. Every mode is orthogonal to piston, tip and
//! tilt over the aperture.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::preprocess::ttp_basis;
use crate::series::{FlowConditions, Geometry, WavefrontSeries};

pub const N_MODES: usize = 10;
const GENERATION_BURN_IN: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoParams {
    pub height: usize,
    pub width: usize,
    pub n_frames: usize,
    pub dt: f64,
    pub dx: f64,
    /// RMS-per-mode OPD scale (m).
    pub opd_scale: f64,
    /// Pixel noise standard deviation relative to `opd_scale`.
    pub noise: f64,
    pub circular: bool,
    pub seed: u64,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            height: 32,
            width: 32,
            n_frames: 8192,
            dt: 2e-5,
            dx: 1e-3,
            opd_scale: 5e-8,
            noise: 1e-3,
            circular: true,
            seed: 0,
        }
    }
}

/// Flow conditions that go with the demo data for Strouhal scaling.
pub fn demo_flow() -> FlowConditions {
    FlowConditions {
        u_inf: 100.0,
        delta: 0.025,
    }
}

/// `P × 10` matrix of TTP-free modes, orthogonal, each with unit RMS per pixel.
pub fn planted_modes(geometry: &Geometry) -> Result<DMatrix<f64>> {
    let (_, q) = ttp_basis(geometry)?;
    let pixels = geometry.valid_pixels();
    let cy = (geometry.height as f64 - 1.0) / 2.0;
    let cx = (geometry.width as f64 - 1.0) / 2.0;
    let radius = geometry.height.min(geometry.width) as f64 / 2.0;
    let raw = DMatrix::from_fn(pixels.len(), N_MODES, |i, j| {
        let u = (pixels[i].1 as f64 - cx) / radius;
        let v = (pixels[i].0 as f64 - cy) / radius;
        let envelope = (-(u * u + v * v) / 0.8).exp();
        let blob = |u0: f64, v0: f64, w: f64| (-((u - u0).powi(2) + (v - v0).powi(2)) / (w * w)).exp();
        match j {
            0..=5 => {
                let k = (j / 2 + 1) as f64;
                let phase = PI * k * u + 0.3 * PI * v;
                envelope * if j % 2 == 0 { phase.cos() } else { phase.sin() }
            }
            6 => envelope * (PI * v).cos() * (0.5 * PI * u).cos(),
            7 => blob(0.35, -0.2, 0.35) - blob(-0.35, 0.2, 0.35),
            8 => envelope * (2.0 * PI * v).sin(),
            _ => blob(0.0, 0.45, 0.3) - 0.5 * blob(0.0, -0.45, 0.4),
        }
    });
    let free = &raw - &q * q.tr_mul(&raw);
    let qr = free.qr();
    if qr.r().diagonal().iter().any(|d| d.abs() < 1e-8) {
        return Err(Error::numerical("demo", "aperture too small for the planted modes"));
    }
    Ok(qr.q() * (pixels.len() as f64).sqrt())
}

/// `10 × n` planted coefficient series, each row with unit stationary variance.
pub fn planted_dynamics(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = move || -> f64 { StandardNormal.sample(&mut rng) };
    // (radius, cycles per sample, stationary std) for each rotating pair.
    let pairs: [(f64, f64, f64); 3] = [(0.8, 0.02, 1.0), (0.75, 0.05, 1.0), (0.7, 0.1, 1.0)];
    let (a1, a2, ar2_std): (f64, f64, f64) = (0.8, -0.4, 1.0);
    let ar2_gamma0 = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
    let ar1 = [(0.9, 1.0), (0.75, 1.0), (0.6, 1.0)];

    let mut state = [0.0; N_MODES];
    let mut ar2_prev = 0.0;
    let mut z = DMatrix::zeros(N_MODES, n);
    for t in 0..GENERATION_BURN_IN + n {
        for (p, &(rho, freq, std)) in pairs.iter().enumerate() {
            let (c, s) = ((2.0 * PI * freq).cos(), (2.0 * PI * freq).sin());
            let sigma = std * (1.0 - rho * rho).sqrt();
            let (x, y) = (state[2 * p], state[2 * p + 1]);
            state[2 * p] = rho * (c * x - s * y) + sigma * e();
            state[2 * p + 1] = rho * (s * x + c * y) + sigma * e();
        }
        let current = state[6];
        state[6] = a1 * current + a2 * ar2_prev + ar2_std / ar2_gamma0.sqrt() * e();
        ar2_prev = current;
        for (i, &(a, std)) in ar1.iter().enumerate() {
            state[7 + i] = a * state[7 + i] + std * (1.0 - a * a).sqrt() * e();
        }
        if t >= GENERATION_BURN_IN {
            for (m, v) in state.iter().enumerate() {
                z[(m, t - GENERATION_BURN_IN)] = *v;
            }
        }
    }
    z
}

pub fn demo_series(params: &DemoParams) -> Result<WavefrontSeries> {
    if params.n_frames == 0 || !(params.opd_scale > 0.0) || !(params.noise >= 0.0) {
        return Err(Error::invalid("demo", "frames, OPD scale and noise must be positive"));
    }
    let geometry = if params.circular {
        Geometry::circular(params.height, params.width, params.dt, params.dx)
    } else {
        Geometry::full(params.height, params.width, params.dt, params.dx)
    };
    geometry.validate()?;
    let modes = planted_modes(&geometry)?;
    let coeffs = planted_dynamics(params.n_frames, params.seed);
    let pixels = geometry.valid_pixels();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x005E_ED0F_D15C);
    let npix = geometry.n_pixels();
    let mut frames = vec![0.0; params.n_frames * npix];
    let x = &modes * &coeffs;
    for t in 0..params.n_frames {
        let frame = &mut frames[t * npix..(t + 1) * npix];
        for (i, &(y, xx)) in pixels.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            frame[y * params.width + xx] = params.opd_scale * (x[(i, t)] + params.noise * noise);
        }
    }
    let mut series = WavefrontSeries::new(geometry, params.n_frames, frames, format!("demo seed={}", params.seed))?;
    let flow = demo_flow();
    series.metadata.insert("source".into(), "planted demo process".into());
    series.metadata.insert("u_inf".into(), flow.u_inf.to_string());
    series.metadata.insert("delta".into(), flow.delta.to_string());
    Ok(series)
}
