//! The fitted ReVAR model and its `.rvm` file format.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::WelchParams;
use crate::error::{Error, Result};
use crate::io::{decode_mask, fmt_f64, write_container, BlockData, FileKind, RawContainer, MODEL_MAGIC};
use crate::longrange::LongRangeSpectra;
use crate::preprocess::{remove_ttp, vectorize};
use crate::rewhiten::RewhitenModel;
use crate::series::{Geometry, WavefrontSeries};
use crate::var::VarModel;
use crate::whitening::WhiteningModel;

/// Everything needed to synthesize: spatial whitening, VAR dynamics,
/// residual rewhitening and the optional long-range spectra.
///
/// `geometry` describes the working orientation. When `transposed` is set
/// the training data were transposed before fitting and synthetic output
/// is transposed back.
#[derive(Debug, Clone, PartialEq)]
pub struct ReVarModel {
    pub geometry: Geometry,
    pub whitening: WhiteningModel,
    pub var: VarModel,
    pub rewhiten: RewhitenModel,
    pub longrange: Option<LongRangeSpectra>,
    pub transposed: bool,
    pub ttp_removed: bool,
    pub metadata: BTreeMap<String, String>,
}

fn all_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> bool {
    values.into_iter().all(|v| v.is_finite())
}

impl ReVarModel {
    pub fn rank(&self) -> usize {
        self.whitening.rank()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let r = self.whitening.rank();
        if self.var.dim() != r || self.rewhiten.dim() != r {
            return Err(Error::invalid(
                "model",
                format!(
                    "inconsistent rank: whitening r={r}, VAR dimension {}, rewhiten dimension {}",
                    self.var.dim(),
                    self.rewhiten.dim()
                ),
            ));
        }
        let p = self.whitening.n_pixels();
        if p != self.geometry.n_valid() || self.whitening.basis.nrows() != p {
            return Err(Error::mismatch(
                "model",
                "whitening pixels vs mask",
                self.geometry.n_valid(),
                p,
            ));
        }
        if self.rewhiten.basis.shape() != (r, r) {
            return Err(Error::invalid("model", "inconsistent rank: rewhiten basis is not r×r"));
        }
        let finite = all_finite(self.whitening.mean.iter())
            && all_finite(self.whitening.basis.iter())
            && all_finite(self.whitening.eigvals.iter())
            && self.whitening.total_variance.is_finite()
            && self.var.coeffs.iter().all(|a| all_finite(a.iter()))
            && all_finite(self.rewhiten.basis.iter())
            && all_finite(self.rewhiten.eigvals.iter());
        if !finite {
            return Err(Error::invalid("model", "non-finite model parameter"));
        }
        if self
            .whitening
            .eigvals
            .iter()
            .chain(self.rewhiten.eigvals.iter())
            .any(|&l| l <= 0.0)
        {
            return Err(Error::invalid("model", "eigenvalues must be positive"));
        }
        if let Some(lr) = &self.longrange {
            lr.params.validate()?;
            if lr.k_modes() > r {
                return Err(Error::invalid(
                    "model",
                    format!("longrange k_modes {} exceeds rank {r}", lr.k_modes()),
                ));
            }
            let bins = lr.params.segment_len / 2;
            if lr
                .spectra
                .iter()
                .any(|s| s.len() != bins || s.iter().any(|v| !(v.is_finite() && *v >= 0.0)))
            {
                return Err(Error::invalid(
                    "model",
                    "longrange spectra must be finite, non-negative, one per Welch bin",
                ));
            }
        }
        Ok(())
    }

    /// Applies the training-time orientation and TTP handling to `series`.
    pub fn prepare(&self, series: &WavefrontSeries) -> Result<WavefrontSeries> {
        let mut s = if self.transposed {
            series.transposed()
        } else {
            series.clone()
        };
        if self.ttp_removed {
            s = remove_ttp(&s)?;
        }
        if s.geometry.height != self.geometry.height
            || s.geometry.width != self.geometry.width
            || s.geometry.mask != self.geometry.mask
        {
            return Err(Error::invalid("model", "series geometry does not match the model"));
        }
        Ok(s)
    }

    /// Whitened coefficients `Z` of a series in the model geometry.
    pub fn whiten_series(&self, series: &WavefrontSeries) -> Result<DMatrix<f64>> {
        let x = vectorize(&self.prepare(series)?)?;
        self.whitening.whiten(&x.data)
    }

    /// The full analysis chain: whiten, VAR residuals, rewhiten.
    /// Returns an `r × (T − p)` series that is white for a well-fitted model.
    pub fn analyze(&self, series: &WavefrontSeries) -> Result<DMatrix<f64>> {
        let z = self.whiten_series(series)?;
        let e = self.var.residuals(&z)?;
        self.rewhiten.rewhiten(&e)
    }
}

/// Writes a model. Matrices are stored column-major.
pub fn save_model(model: &ReVarModel, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    let g = &model.geometry;
    let r = model.rank();
    let mut header = vec![
        ("H".to_string(), g.height.to_string()),
        ("W".to_string(), g.width.to_string()),
        ("dt".to_string(), fmt_f64(g.dt)),
        ("dx".to_string(), fmt_f64(g.dx)),
        ("P".to_string(), model.whitening.n_pixels().to_string()),
        ("transposed".to_string(), (model.transposed as u8).to_string()),
        ("ttp_removed".to_string(), (model.ttp_removed as u8).to_string()),
        ("whitening.rank".to_string(), r.to_string()),
        (
            "whitening.total_variance".to_string(),
            fmt_f64(model.whitening.total_variance),
        ),
        ("var.dim".to_string(), model.var.dim().to_string()),
        ("var.order".to_string(), model.var.order().to_string()),
        ("rewhiten.dim".to_string(), model.rewhiten.dim().to_string()),
    ];
    let mut spectra = Vec::new();
    if let Some(lr) = &model.longrange {
        header.push(("longrange.k_modes".to_string(), lr.k_modes().to_string()));
        header.push(("longrange.segment_len".to_string(), lr.params.segment_len.to_string()));
        header.push(("longrange.overlap".to_string(), fmt_f64(lr.params.overlap)));
        spectra = lr.spectra.concat();
    }
    header.extend(model.metadata.iter().map(|(k, v)| (format!("meta.{k}"), v.clone())));

    let mask: Vec<u8> = g.mask.iter().map(|&m| m as u8).collect();
    let coeffs: Vec<f64> = model.var.coeffs.iter().flat_map(|a| a.iter().copied()).collect();
    let mut blocks = vec![
        ("mask", BlockData::Bytes(&mask)),
        ("whitening.mean", BlockData::F64(model.whitening.mean.as_slice())),
        ("whitening.basis", BlockData::F64(model.whitening.basis.as_slice())),
        ("whitening.eigvals", BlockData::F64(model.whitening.eigvals.as_slice())),
        ("var.coeffs", BlockData::F64(&coeffs)),
        ("rewhiten.basis", BlockData::F64(model.rewhiten.basis.as_slice())),
        ("rewhiten.eigvals", BlockData::F64(model.rewhiten.eigvals.as_slice())),
    ];
    if model.longrange.is_some() {
        blocks.push(("longrange.spectra", BlockData::F64(&spectra)));
    }
    write_container(path.as_ref(), MODEL_MAGIC, &header, &blocks)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ReVarModel> {
    let raw = RawContainer::read(path.as_ref(), FileKind::Model)?;
    model_from_container(&raw)
}

fn flag(raw: &RawContainer, key: &str) -> Result<bool> {
    match raw.str(key)? {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::format(key, None, format!("expected 0 or 1, found '{other}'"))),
    }
}

fn model_from_container(raw: &RawContainer) -> Result<ReVarModel> {
    let (height, width) = (raw.usize("H")?, raw.usize("W")?);
    let geometry = Geometry {
        height,
        width,
        mask: decode_mask(raw, "mask", height * width)?,
        dt: raw.f64("dt")?,
        dx: raw.f64("dx")?,
    };
    let p = raw.usize("P")?;
    let r = raw.usize("whitening.rank")?;
    let (var_dim, order, re_dim) = (
        raw.usize("var.dim")?,
        raw.usize("var.order")?,
        raw.usize("rewhiten.dim")?,
    );
    if var_dim != r || re_dim != r {
        return Err(Error::format(
            "whitening.rank",
            None,
            format!("inconsistent rank: whitening r={r}, var.dim={var_dim}, rewhiten.dim={re_dim}"),
        ));
    }
    if p != geometry.n_valid() {
        return Err(Error::format(
            "P",
            None,
            format!(
                "pixel count {p} disagrees with the {} in-mask pixels",
                geometry.n_valid()
            ),
        ));
    }

    let whitening = WhiteningModel {
        mean: DVector::from_vec(raw.block_f64("whitening.mean", p)?),
        basis: DMatrix::from_vec(p, r, raw.block_f64("whitening.basis", p * r)?),
        eigvals: DVector::from_vec(raw.block_f64("whitening.eigvals", r)?),
        total_variance: raw.f64("whitening.total_variance")?,
    };
    let flat = raw.block_f64("var.coeffs", order * r * r)?;
    let coeffs = if r == 0 {
        vec![DMatrix::zeros(0, 0); order]
    } else {
        flat.chunks_exact(r * r)
            .map(|c| DMatrix::from_column_slice(r, r, c))
            .collect()
    };
    let var = VarModel::new(coeffs)?;
    let rewhiten = RewhitenModel {
        basis: DMatrix::from_vec(r, r, raw.block_f64("rewhiten.basis", r * r)?),
        eigvals: DVector::from_vec(raw.block_f64("rewhiten.eigvals", r)?),
    };
    let longrange = if raw.has_block("longrange.spectra") {
        let k = raw.usize("longrange.k_modes")?;
        let params = WelchParams {
            segment_len: raw.usize("longrange.segment_len")?,
            overlap: raw.f64("longrange.overlap")?,
        };
        params.validate()?;
        let bins = params.segment_len / 2;
        let flat = raw.block_f64("longrange.spectra", k * bins)?;
        let spectra = if bins == 0 {
            vec![Vec::new(); k]
        } else {
            flat.chunks_exact(bins).map(<[f64]>::to_vec).collect()
        };
        Some(LongRangeSpectra { params, spectra })
    } else {
        None
    };

    let model = ReVarModel {
        geometry,
        whitening,
        var,
        rewhiten,
        longrange,
        transposed: flag(raw, "transposed")?,
        ttp_removed: flag(raw, "ttp_removed")?,
        metadata: raw.prefixed("meta."),
    };
    model.validate()?;
    Ok(model)
}
