//! Fits the complete model: spatial PCA, VAR, residual rewhitening and
//! long-range spectra.

use std::collections::BTreeMap;

use log::{info, warn};
use serde::Serialize;

use crate::diagnostics::{WelchParams, DEFAULT_OVERLAP, MIN_SEGMENT_LEN};
use crate::error::{Error, Result};
use crate::longrange::{LongRangeSpectra, DEFAULT_K_MODES};
use crate::model::ReVarModel;
use crate::preprocess::{remove_ttp, vectorize};
use crate::rewhiten::{fit_rewhiten, whiteness, Whiteness};
use crate::series::WavefrontSeries;
use crate::var::{fit_var, select_order_bic, DEFAULT_MAX_ORDER, DEFAULT_ORDER};
use crate::whitening::{fit_pca, DEFAULT_ENERGY_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderSelection {
    Fixed(usize),
    /// Minimum BIC over `1..=max_order`.
    Bic {
        max_order: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub energy_threshold: f64,
    pub order: OrderSelection,
    /// `None` picks `min(r, 10)`.
    pub k_modes: Option<usize>,
    /// Welch segment length of the long-range spectra; `None` uses the default for `T`.
    pub segment_len: Option<usize>,
    pub overlap: f64,
    pub remove_ttp: bool,
    pub transpose: bool,
    /// Shrink an unstable fit into the stable region instead of only warning.
    pub shrink_unstable: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            energy_threshold: DEFAULT_ENERGY_THRESHOLD,
            order: OrderSelection::Fixed(DEFAULT_ORDER),
            k_modes: None,
            segment_len: None,
            overlap: DEFAULT_OVERLAP,
            remove_ttp: true,
            transpose: false,
            shrink_unstable: false,
        }
    }
}

impl OrderSelection {
    pub fn auto() -> Self {
        OrderSelection::Bic {
            max_order: DEFAULT_MAX_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub n_frames: usize,
    pub n_pixels: usize,
    pub rank: usize,
    pub retained_energy: f64,
    pub order: usize,
    pub bic: Option<Vec<f64>>,
    pub spectral_radius: f64,
    pub stable: bool,
    pub shrink_factor: Option<f64>,
    pub whiteness: Whiteness,
    pub longrange_modes: usize,
    pub longrange_segment_len: Option<usize>,
}

pub fn fit_revar(series: &WavefrontSeries, cfg: &FitConfig) -> Result<(ReVarModel, FitSummary)> {
    let mut s = if cfg.transpose {
        series.transposed()
    } else {
        series.clone()
    };
    if cfg.remove_ttp {
        s = remove_ttp(&s)?;
    }
    let x = vectorize(&s)?;
    let whitening = fit_pca(&x.data, cfg.energy_threshold)?;
    let z = whitening.whiten(&x.data)?;
    drop(x);
    let r = whitening.rank();
    let t = z.ncols();

    let (order, bic) = match cfg.order {
        OrderSelection::Fixed(p) => (p, None),
        OrderSelection::Bic { max_order } => {
            let (p, scores) = select_order_bic(&z, max_order)?;
            (p, Some(scores))
        }
    };
    let mut var = fit_var(&z, order)?;
    let residuals = var.residuals(&z)?;
    let stability = var.stability();
    let mut shrink_factor = None;
    if !stability.stable {
        if cfg.shrink_unstable {
            shrink_factor = var.shrink_to_stable();
            warn!(
                "fit: unstable VAR (radius {:.6}) shrunk by {:e}",
                stability.spectral_radius,
                shrink_factor.unwrap_or(1.0)
            );
        } else {
            warn!(
                "fit: unstable VAR (radius {:.6}); synthesis will require shrinkage",
                stability.spectral_radius
            );
        }
    }
    let rewhiten = fit_rewhiten(&residuals)?;
    let w = rewhiten.rewhiten(&residuals)?;
    let white = whiteness(&w);
    drop((residuals, w));

    let k = cfg.k_modes.unwrap_or(r.min(DEFAULT_K_MODES));
    if k > r {
        return Err(Error::invalid("longrange", format!("k_modes {k} exceeds rank {r}")));
    }
    let params = WelchParams {
        segment_len: cfg
            .segment_len
            .unwrap_or_else(|| WelchParams::for_length(t).segment_len),
        overlap: cfg.overlap,
    };
    let longrange = if k == 0 {
        None
    } else if cfg.segment_len.is_none() && cfg.k_modes.is_none() && t < MIN_SEGMENT_LEN {
        warn!("fit: {t} frames is too short for long-range spectra, correction disabled");
        None
    } else {
        Some(LongRangeSpectra::fit(&z, k, params)?)
    };

    let mut metadata = BTreeMap::new();
    metadata.insert("training_label".to_string(), series.label.clone());
    metadata.insert("training_frames".to_string(), t.to_string());
    metadata.insert("energy_threshold".to_string(), format!("{:e}", cfg.energy_threshold));
    metadata.insert(
        "order_selection".to_string(),
        match cfg.order {
            OrderSelection::Fixed(p) => format!("fixed {p}"),
            OrderSelection::Bic { max_order } => format!("bic 1..={max_order}"),
        },
    );
    metadata.insert(
        "spectral_radius".to_string(),
        format!("{:e}", stability.spectral_radius),
    );
    if let Some(rho) = shrink_factor {
        metadata.insert("shrink_factor".to_string(), format!("{rho:e}"));
    }

    let summary = FitSummary {
        n_frames: t,
        n_pixels: whitening.n_pixels(),
        rank: r,
        retained_energy: whitening.retained_energy(),
        order,
        bic,
        spectral_radius: stability.spectral_radius,
        stable: stability.stable,
        shrink_factor,
        whiteness: white,
        longrange_modes: longrange.as_ref().map_or(0, LongRangeSpectra::k_modes),
        longrange_segment_len: longrange.as_ref().map(|l| l.params.segment_len),
    };
    let model = ReVarModel {
        geometry: s.geometry,
        whitening,
        var,
        rewhiten,
        longrange,
        transposed: cfg.transpose,
        ttp_removed: cfg.remove_ttp,
        metadata,
    };
    model.validate()?;
    info!("fit: r={r}, p={order}, radius={:.6}", stability.spectral_radius);
    Ok((model, summary))
}
