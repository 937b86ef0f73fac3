//! File formats for wavefront series (`.wfs`) and fitted models (`.rvm`).

mod container;

use std::path::Path;

pub(crate) use container::{fmt_f64, write_container, BlockData, RawContainer};
pub use container::{peek_kind, FileKind, FORMAT_VERSION, MODEL_MAGIC, SERIES_MAGIC};

use crate::error::{Error, Result};
use crate::series::{Geometry, WavefrontSeries};

/// Writes a series. Frames go out as `f64` in `(t, y, x)` order, followed by
/// the mask at one byte per pixel.
pub fn save_series(series: &WavefrontSeries, path: impl AsRef<Path>) -> Result<()> {
    series.validate()?;
    let g = &series.geometry;
    let mut header = vec![
        ("T".to_string(), series.n_frames.to_string()),
        ("H".to_string(), g.height.to_string()),
        ("W".to_string(), g.width.to_string()),
        ("dt".to_string(), fmt_f64(g.dt)),
        ("dx".to_string(), fmt_f64(g.dx)),
        ("label".to_string(), series.label.clone()),
    ];
    header.extend(series.metadata.iter().map(|(k, v)| (format!("meta.{k}"), v.clone())));
    let mask: Vec<u8> = g.mask.iter().map(|&m| m as u8).collect();
    write_container(
        path.as_ref(),
        SERIES_MAGIC,
        &header,
        &[
            ("frames", BlockData::F64(&series.frames)),
            ("mask", BlockData::Bytes(&mask)),
        ],
    )
}

pub fn load_series(path: impl AsRef<Path>) -> Result<WavefrontSeries> {
    let raw = RawContainer::read(path.as_ref(), FileKind::Series)?;
    series_from_container(&raw)
}

fn series_from_container(raw: &RawContainer) -> Result<WavefrontSeries> {
    let n_frames = raw.usize("T")?;
    let height = raw.usize("H")?;
    let width = raw.usize("W")?;
    let geometry = Geometry {
        height,
        width,
        mask: decode_mask(raw, "mask", height * width)?,
        dt: raw.f64("dt")?,
        dx: raw.f64("dx")?,
    };
    let count = n_frames
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| Error::format("T", None, "frame dimensions overflow"))?;
    let frames = raw.block_f64("frames", count)?;
    let npix = height * width;
    let base = raw.block_offset("frames").unwrap_or(0);
    for (i, v) in frames.iter().enumerate() {
        let in_mask = geometry.mask[i % npix.max(1)];
        if in_mask && !v.is_finite() {
            return Err(Error::format(
                "frames",
                Some(base + 8 * i as u64),
                "non-finite in-mask value",
            ));
        }
        if !in_mask && *v != 0.0 {
            return Err(Error::format(
                "frames",
                Some(base + 8 * i as u64),
                "out-of-mask value is not zero",
            ));
        }
    }
    let series = WavefrontSeries {
        geometry,
        n_frames,
        frames,
        label: raw.str("label")?.to_string(),
        metadata: raw.prefixed("meta."),
    };
    series.validate()?;
    Ok(series)
}

pub(crate) fn decode_mask(raw: &RawContainer, block: &str, npix: usize) -> Result<Vec<bool>> {
    let bytes = raw.block_bytes(block, npix)?;
    let base = raw.block_offset(block).unwrap_or(0);
    bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(
                format!("block.{block}"),
                Some(base + i as u64),
                format!("mask byte must be 0 or 1, found {other}"),
            )),
        })
        .collect()
}
