//! In-memory wavefront time-series and the grid it lives on.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Sampling grid shared by every frame of a series: size, aperture mask,
/// sample interval and pixel pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub height: usize,
    pub width: usize,
    /// Row-major `height × width` aperture; `true` marks a valid pixel.
    pub mask: Vec<bool>,
    /// Sample interval in seconds.
    pub dt: f64,
    /// Pixel pitch in meters.
    pub dx: f64,
}

impl Geometry {
    pub fn full(height: usize, width: usize, dt: f64, dx: f64) -> Self {
        Geometry {
            height,
            width,
            mask: vec![true; height * width],
            dt,
            dx,
        }
    }

    /// Circular aperture inscribed in the grid.
    pub fn circular(height: usize, width: usize, dt: f64, dx: f64) -> Self {
        let cy = (height as f64 - 1.0) / 2.0;
        let cx = (width as f64 - 1.0) / 2.0;
        let radius = height.min(width) as f64 / 2.0;
        let mask = (0..height * width)
            .map(|i| {
                let (y, x) = ((i / width) as f64, (i % width) as f64);
                (y - cy).powi(2) + (x - cx).powi(2) <= radius * radius
            })
            .collect();
        Geometry {
            height,
            width,
            mask,
            dt,
            dx,
        }
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Row-major `(y, x)` coordinates of the in-mask pixels.
    pub fn valid_pixels(&self) -> Vec<(usize, usize)> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return Err(Error::invalid(
                "series",
                format!("grid must be at least 2x2, got {}x{}", self.height, self.width),
            ));
        }
        if self.mask.len() != self.n_pixels() {
            return Err(Error::mismatch(
                "series",
                "mask length",
                self.n_pixels(),
                self.mask.len(),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(
                "series",
                format!("dt must be positive, got {}", self.dt),
            ));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::invalid(
                "series",
                format!("dx must be positive, got {}", self.dx),
            ));
        }
        Ok(())
    }

    pub fn transposed(&self) -> Geometry {
        let mut mask = vec![false; self.mask.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                mask[x * self.height + y] = self.mask[y * self.width + x];
            }
        }
        Geometry {
            height: self.width,
            width: self.height,
            mask,
            dt: self.dt,
            dx: self.dx,
        }
    }
}

/// `T` frames of OPD values (meters) on a fixed masked grid.
///
/// Frames are stored row-major in `(t, y, x)` order. Pixels outside the mask
/// hold exactly `0.0` and never enter any statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefrontSeries {
    pub geometry: Geometry,
    pub n_frames: usize,
    pub frames: Vec<f64>,
    pub label: String,
    /// Free-form provenance (effective configuration, seeds, ...).
    pub metadata: BTreeMap<String, String>,
}

impl WavefrontSeries {
    /// Builds a series, zeroing out-of-mask pixels and checking every invariant.
    pub fn new(geometry: Geometry, n_frames: usize, mut frames: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        geometry.validate()?;
        let npix = geometry.n_pixels();
        if frames.len() != n_frames * npix {
            return Err(Error::mismatch(
                "series",
                "frame buffer length",
                n_frames * npix,
                frames.len(),
            ));
        }
        for frame in frames.chunks_mut(npix.max(1)) {
            for (v, &m) in frame.iter_mut().zip(&geometry.mask) {
                if !m {
                    *v = 0.0;
                }
            }
        }
        let series = WavefrontSeries {
            geometry,
            n_frames,
            frames,
            label: label.into(),
            metadata: BTreeMap::new(),
        };
        series.validate()?;
        Ok(series)
    }

    pub fn zeros(geometry: Geometry, n_frames: usize, label: impl Into<String>) -> Result<Self> {
        let len = geometry.n_pixels() * n_frames;
        Self::new(geometry, n_frames, vec![0.0; len], label)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.n_frames < 1 {
            return Err(Error::invalid("series", "series must contain at least one frame"));
        }
        let npix = self.geometry.n_pixels();
        if self.frames.len() != self.n_frames * npix {
            return Err(Error::mismatch(
                "series",
                "frame buffer length",
                self.n_frames * npix,
                self.frames.len(),
            ));
        }
        for (t, frame) in self.frames.chunks(npix).enumerate() {
            for (i, (&v, &m)) in frame.iter().zip(&self.geometry.mask).enumerate() {
                if m && !v.is_finite() {
                    return Err(Error::invalid(
                        "series",
                        format!(
                            "non-finite value at frame {t}, pixel ({}, {})",
                            i / self.geometry.width,
                            i % self.geometry.width
                        ),
                    ));
                }
                if !m && v != 0.0 {
                    return Err(Error::invalid(
                        "series",
                        format!(
                            "out-of-mask pixel ({}, {}) in frame {t} is not zero",
                            i / self.geometry.width,
                            i % self.geometry.width
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let npix = self.geometry.n_pixels();
        &self.frames[t * npix..(t + 1) * npix]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let npix = self.geometry.n_pixels();
        &mut self.frames[t * npix..(t + 1) * npix]
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> f64 {
        self.frames[(t * self.geometry.height + y) * self.geometry.width + x]
    }

    /// Time history of one pixel.
    pub fn pixel_series(&self, y: usize, x: usize) -> Vec<f64> {
        let npix = self.geometry.n_pixels();
        let offset = y * self.geometry.width + x;
        (0..self.n_frames).map(|t| self.frames[t * npix + offset]).collect()
    }

    /// Largest absolute in-mask value.
    pub fn max_abs(&self) -> f64 {
        self.frames.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Swaps the x and y axes of every frame (stream-wise direction becomes the column axis).
    pub fn transposed(&self) -> WavefrontSeries {
        let (h, w) = (self.geometry.height, self.geometry.width);
        let mut frames = vec![0.0; self.frames.len()];
        for t in 0..self.n_frames {
            let src = self.frame(t);
            let dst = &mut frames[t * h * w..(t + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    dst[x * h + y] = src[y * w + x];
                }
            }
        }
        WavefrontSeries {
            geometry: self.geometry.transposed(),
            n_frames: self.n_frames,
            frames,
            label: self.label.clone(),
            metadata: self.metadata.clone(),
        }
    }
}

/// Free-stream conditions used to form the Strouhal number `f·δ/U∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConditions {
    /// Free-stream velocity, m/s.
    pub u_inf: f64,
    /// Boundary-layer thickness, m.
    pub delta: f64,
}

impl FlowConditions {
    pub fn new(u_inf: f64, delta: f64) -> Result<Self> {
        if !(u_inf > 0.0 && u_inf.is_finite()) {
            return Err(Error::invalid("flow", format!("u_inf must be positive, got {u_inf}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid("flow", format!("delta must be positive, got {delta}")));
        }
        Ok(FlowConditions { u_inf, delta })
    }

    /// Multiplier turning a frequency in Hz into `St_δ`.
    pub fn strouhal_scale(&self) -> f64 {
        self.delta / self.u_inf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_zeroes_out_of_mask_pixels() {
        let mut g = Geometry::full(2, 2, 1.0, 1.0);
        g.mask[3] = false;
        let s = WavefrontSeries::new(g, 1, vec![1.0, 2.0, 3.0, 4.0], "x").unwrap();
        assert_eq!(s.frames, vec![1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite_in_mask() {
        let g = Geometry::full(2, 2, 1.0, 1.0);
        let err = WavefrontSeries::new(g, 1, vec![1.0, f64::NAN, 3.0, 4.0], "x").unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Geometry::full(1, 4, 1.0, 1.0).validate().is_err());
        assert!(Geometry::full(2, 2, 0.0, 1.0).validate().is_err());
        assert!(Geometry::full(2, 2, 1.0, -1.0).validate().is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let g = Geometry::circular(3, 5, 1.0, 1.0);
        let n = g.n_pixels() * 2;
        let s = WavefrontSeries::new(g, 2, (0..n).map(|v| v as f64).collect(), "t").unwrap();
        let tt = s.transposed();
        assert_eq!(tt.geometry.height, 5);
        assert_eq!(tt.get(1, 4, 2), s.get(1, 2, 4));
        assert_eq!(tt.transposed(), s);
    }

    #[test]
    fn flow_conditions_validated() {
        assert!(FlowConditions::new(0.0, 1.0).is_err());
        assert!(FlowConditions::new(1.0, -1.0).is_err());
        assert_eq!(FlowConditions::new(2.0, 1.0).unwrap().strouhal_scale(), 0.5);
    }
}
