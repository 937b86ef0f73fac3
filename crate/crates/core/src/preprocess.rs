//! Frame conditioning: tip/tilt/piston removal, masked vectorization and
//! the stream-wise deflection angle.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::series::{Geometry, WavefrontSeries};

/// In-mask pixels of a series as a `P × T` matrix, one column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMatrix {
    pub data: DMatrix<f64>,
    /// Row-major `(y, x)` grid position of each matrix row.
    pub index_map: Vec<(usize, usize)>,
}

impl PixelMatrix {
    pub fn n_pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.data.ncols()
    }
}

pub fn vectorize(series: &WavefrontSeries) -> Result<PixelMatrix> {
    let g = &series.geometry;
    let index_map = g.valid_pixels();
    if index_map.is_empty() {
        return Err(Error::invalid("preprocess", "mask has no valid pixels"));
    }
    let offsets: Vec<usize> = index_map.iter().map(|&(y, x)| y * g.width + x).collect();
    let p = offsets.len();
    let mut values = Vec::with_capacity(p * series.n_frames);
    for t in 0..series.n_frames {
        let frame = series.frame(t);
        values.extend(offsets.iter().map(|&o| frame[o]));
    }
    Ok(PixelMatrix {
        data: DMatrix::from_vec(p, series.n_frames, values),
        index_map,
    })
}

/// Scatters the rows of `matrix` back onto `geometry`; out-of-mask pixels are 0.
pub fn devectorize(matrix: &PixelMatrix, geometry: &Geometry) -> Result<WavefrontSeries> {
    geometry.validate()?;
    let expected = geometry.valid_pixels();
    if matrix.index_map != expected || matrix.data.nrows() != expected.len() {
        return Err(Error::mismatch(
            "preprocess",
            "pixel rows vs mask",
            expected.len(),
            matrix.data.nrows(),
        ));
    }
    let npix = geometry.n_pixels();
    let n_frames = matrix.n_frames();
    let mut frames = vec![0.0; npix * n_frames];
    for (t, column) in matrix.data.column_iter().enumerate() {
        let frame = &mut frames[t * npix..(t + 1) * npix];
        for (&(y, x), &v) in expected.iter().zip(column.iter()) {
            frame[y * geometry.width + x] = v;
        }
    }
    WavefrontSeries::new(geometry.clone(), n_frames, frames, "")
}

/// Orthonormal basis (masked inner product) of `span{1, x, y}` over the aperture.
pub(crate) fn ttp_basis(geometry: &Geometry) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let pixels = geometry.valid_pixels();
    if pixels.len() < 4 {
        return Err(Error::numerical(
            "preprocess",
            format!("TTP basis singular: mask has {} pixels, need at least 4", pixels.len()),
        ));
    }
    let n = pixels.len() as f64;
    let my = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mx = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let design = DMatrix::from_fn(pixels.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => pixels[i].1 as f64 - mx,
        _ => pixels[i].0 as f64 - my,
    });
    let scale = design.column_iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let qr = design.qr();
    let r = qr.r();
    if (0..3).any(|i| r[(i, i)].abs() <= 1e-10 * scale) {
        return Err(Error::numerical(
            "preprocess",
            "TTP basis singular: mask pixels are collinear",
        ));
    }
    let offsets = pixels.iter().map(|&(y, x)| y * geometry.width + x).collect();
    Ok((offsets, qr.q()))
}

/// Removes the least-squares piston, tip and tilt from every frame.
pub fn remove_ttp(series: &WavefrontSeries) -> Result<WavefrontSeries> {
    let (offsets, q) = ttp_basis(&series.geometry)?;
    let mut out = series.clone();
    let mut v = DVector::zeros(offsets.len());
    for t in 0..out.n_frames {
        let frame = out.frame_mut(t);
        for (vi, &o) in v.iter_mut().zip(&offsets) {
            *vi = frame[o];
        }
        let coeffs = q.tr_mul(&v);
        let fit = &q * coeffs;
        for ((&o, vi), fi) in offsets.iter().zip(v.iter()).zip(fit.iter()) {
            frame[o] = vi - fi;
        }
    }
    Ok(out)
}

/// Stream-wise deflection angle `θx = ∂OPD/∂x` (radians).
///
/// Only pixels whose left and right neighbours are both in the aperture
/// carry a value; the mask shrinks accordingly.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflectionSeries(pub WavefrontSeries);

impl Deref for DeflectionSeries {
    type Target = WavefrontSeries;

    fn deref(&self) -> &WavefrontSeries {
        &self.0
    }
}

impl DeflectionSeries {
    pub fn into_inner(self) -> WavefrontSeries {
        self.0
    }
}

/// Central-difference `θx(t, y, x) = (OPD(x+1) − OPD(x−1)) / (2·dx)`.
pub fn deflection_x(series: &WavefrontSeries) -> Result<DeflectionSeries> {
    let g = &series.geometry;
    if g.width < 3 {
        return Err(Error::invalid(
            "preprocess",
            format!("deflection needs width >= 3, got {}", g.width),
        ));
    }
    let (h, w) = (g.height, g.width);
    let mut mask = vec![false; h * w];
    for y in 0..h {
        for x in 1..w - 1 {
            let i = y * w + x;
            mask[i] = g.mask[i - 1] && g.mask[i] && g.mask[i + 1];
        }
    }
    let scale = 1.0 / (2.0 * g.dx);
    let npix = h * w;
    let mut frames = vec![0.0; series.frames.len()];
    for t in 0..series.n_frames {
        let src = series.frame(t);
        let dst = &mut frames[t * npix..(t + 1) * npix];
        for (i, d) in dst.iter_mut().enumerate() {
            if mask[i] {
                *d = (src[i + 1] - src[i - 1]) * scale;
            }
        }
    }
    let geometry = Geometry { mask, ..g.clone() };
    let mut out = WavefrontSeries::new(geometry, series.n_frames, frames, series.label.clone())?;
    out.metadata = series.metadata.clone();
    out.metadata.insert("quantity".into(), "theta_x".into());
    Ok(DeflectionSeries(out))
}
