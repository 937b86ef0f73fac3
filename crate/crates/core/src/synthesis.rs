//! Drives the inverted chain with seeded white noise.

use log::{info, warn};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::longrange::apply_longrange;
use crate::model::ReVarModel;
use crate::series::WavefrontSeries;
use crate::var::burn_in;

/// Columns unwhitened per matrix product; bounds the transient pixel buffer.
const UNWHITEN_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthesisRequest {
    pub n_steps: usize,
    pub seed: u64,
    pub apply_longrange: bool,
    /// Consent to shrink an unstable model's eigenvalues before simulating.
    pub allow_shrink: bool,
}

impl SynthesisRequest {
    pub fn new(n_steps: usize, seed: u64) -> Self {
        SynthesisRequest {
            n_steps,
            seed,
            apply_longrange: true,
            allow_shrink: false,
        }
    }
}

/// `r × n` i.i.d. standard normal samples, drawn column by column so that
/// a longer run with the same seed extends a shorter one.
pub fn generate_noise(r: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut w = DMatrix::zeros(r, n);
    for v in w.as_mut_slice() {
        *v = StandardNormal.sample(&mut rng);
    }
    w
}

pub fn synthesize(model: &ReVarModel, req: &SynthesisRequest) -> Result<WavefrontSeries> {
    model.validate()?;
    if req.n_steps == 0 {
        return Err(Error::invalid("synthesis", "n_steps must be at least 1"));
    }
    let mut var = model.var.clone();
    let stability = var.stability();
    let mut shrink = None;
    if !stability.stable {
        if !req.allow_shrink {
            return Err(Error::numerical(
                "synthesis",
                format!(
                    "unstable model (spectral radius {:.6}); rerun with eigenvalue shrinkage enabled",
                    stability.spectral_radius
                ),
            ));
        }
        shrink = var.shrink_to_stable();
        warn!(
            "synthesis: shrinking unstable model, radius {:.6}",
            stability.spectral_radius
        );
    }

    let r = model.rank();
    let b = burn_in(var.order());
    let eta = model.rewhiten.colorize(&generate_noise(r, b + req.n_steps, req.seed))?;
    let mut z = var.simulate(&eta, &DMatrix::zeros(r, var.order()), b)?;
    drop(eta);

    let mut longrange = "off".to_string();
    if req.apply_longrange {
        if let Some(spectra) = model.longrange.as_ref().filter(|s| s.k_modes() > 0) {
            if req.n_steps < 8 {
                warn!(
                    "synthesis: {} steps is too short for the long-range correction, skipped",
                    req.n_steps
                );
                longrange = "skipped".to_string();
            } else {
                apply_longrange(&spectra.on_grid(req.n_steps), &mut z)?;
                longrange = format!("k={}", spectra.k_modes());
            }
        }
    }

    let g = &model.geometry;
    let pixels = g.valid_pixels();
    let coloring = model.whitening.coloring_matrix();
    let npix = g.n_pixels();
    let mut frames = vec![0.0; req.n_steps * npix];
    let mut start = 0;
    while start < req.n_steps {
        let len = UNWHITEN_CHUNK.min(req.n_steps - start);
        let x = &coloring * z.columns(start, len);
        for c in 0..len {
            let frame = &mut frames[(start + c) * npix..(start + c + 1) * npix];
            for (i, &(y, xx)) in pixels.iter().enumerate() {
                frame[y * g.width + xx] = x[(i, c)] + model.whitening.mean[i];
            }
        }
        start += len;
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("synthesis", "non-finite value in synthesized frames"));
    }

    let source = model
        .metadata
        .get("training_label")
        .map(String::as_str)
        .unwrap_or("unlabeled");
    let mut series = WavefrontSeries {
        geometry: g.clone(),
        n_frames: req.n_steps,
        frames,
        label: format!("revar synthetic seed={} model={source}", req.seed),
        metadata: Default::default(),
    };
    series.metadata.insert("seed".into(), req.seed.to_string());
    series.metadata.insert("n_steps".into(), req.n_steps.to_string());
    series.metadata.insert("burn_in".into(), b.to_string());
    series.metadata.insert("longrange".into(), longrange);
    if let Some(rho) = shrink {
        series.metadata.insert("shrink_factor".into(), format!("{rho:e}"));
    }
    for (k, v) in &model.metadata {
        series.metadata.insert(format!("model.{k}"), v.clone());
    }
    if model.transposed {
        series = series.transposed();
    }
    info!("synthesis: {} frames, r={r}, seed={}", req.n_steps, req.seed);
    Ok(series)
}
