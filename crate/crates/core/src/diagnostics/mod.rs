//! Spectral diagnostics: Welch TPSD, aperture aggregation, Strouhal
//! scaling, curve comparison and plot-data export.

mod compare;
mod plotdata;
mod welch;

pub use compare::{compare_tpsd, compare_tpsd_band, strouhal_premultiply, MatchReport, StrouhalCurve};
pub use plotdata::{export_plotdata, parse_plotdata, read_plotdata, PlotData};
pub use welch::{
    aggregate_tpsd, default_segment_len, smooth_log_boxcar, welch_psd, TpsdCurve, Welch, WelchParams, DEFAULT_OVERLAP,
    MIN_SEGMENT_LEN,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::preprocess::{deflection_x, remove_ttp};
use crate::series::WavefrontSeries;

/// Which per-pixel signal a TPSD is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Opd,
    /// Stream-wise deflection angle, the x-derivative of OPD.
    ThetaX,
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "opd" => Ok(Quantity::Opd),
            "theta_x" => Ok(Quantity::ThetaX),
            other => Err(Error::invalid(
                "diagnostics",
                format!("unknown quantity '{other}' (opd or theta_x)"),
            )),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::Opd => "opd",
            Quantity::ThetaX => "theta_x",
        })
    }
}

/// Aperture TPSD of `quantity`, optionally after removing piston, tip and tilt.
pub fn quantity_tpsd(
    series: &WavefrontSeries,
    quantity: Quantity,
    ttp: bool,
    params: WelchParams,
) -> Result<TpsdCurve> {
    let base = if ttp { remove_ttp(series)? } else { series.clone() };
    match quantity {
        Quantity::Opd => aggregate_tpsd(&base, params),
        Quantity::ThetaX => aggregate_tpsd(&deflection_x(&base)?.0, params),
    }
}
