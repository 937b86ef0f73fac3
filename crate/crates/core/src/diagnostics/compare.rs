//! Strouhal scaling and scalar agreement metrics between two TPSD curves.

use serde::{Deserialize, Serialize};

use super::welch::TpsdCurve;
use crate::error::{Error, Result};
use crate::series::FlowConditions;

/// Bands per decade for the band-wise log-ratio.
const BANDS_PER_DECADE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StrouhalCurve {
    /// `St_δ = f·δ/U∞`.
    pub st: Vec<f64>,
    /// `St_δ × S(f)`.
    pub premultiplied: Vec<f64>,
}

pub fn strouhal_premultiply(curve: &TpsdCurve, flow: &FlowConditions) -> StrouhalCurve {
    let scale = flow.strouhal_scale();
    let st: Vec<f64> = curve.freqs.iter().map(|f| f * scale).collect();
    let premultiplied = st.iter().zip(&curve.power).map(|(s, p)| s * p).collect();
    StrouhalCurve { st, premultiplied }
}

/// Agreement between a reference and a test TPSD over a common band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `∫|f·S_test − f·S_ref| d(ln f) / ∫ f·S_ref d(ln f)`.
    pub integrated_error: f64,
    /// `|P_test − P_ref| / P_ref` with `P = Σ S·df`.
    pub total_power_error: f64,
    /// Largest `|ln(P_test / P_ref)|` over third-octave-decade bands.
    pub max_band_log_ratio: f64,
    pub n_bins: usize,
    pub n_bands: usize,
    pub f_lo: f64,
    pub f_hi: f64,
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Log-log linear interpolation of `curve` at `f` (linear where a power is zero).
fn interpolate(curve: &TpsdCurve, f: f64) -> f64 {
    let fs = &curve.freqs;
    let j = fs.partition_point(|&x| x <= f);
    if j == 0 {
        return curve.power[0];
    }
    if j == fs.len() {
        return curve.power[fs.len() - 1];
    }
    let (f0, f1) = (fs[j - 1], fs[j]);
    let (p0, p1) = (curve.power[j - 1], curve.power[j]);
    if f == f0 {
        return p0;
    }
    if p0 > 0.0 && p1 > 0.0 {
        let t = (f / f0).ln() / (f1 / f0).ln();
        (p0.ln() + t * (p1.ln() - p0.ln())).exp()
    } else {
        p0 + (f - f0) / (f1 - f0) * (p1 - p0)
    }
}

pub fn compare_tpsd(reference: &TpsdCurve, test: &TpsdCurve) -> Result<MatchReport> {
    compare_tpsd_band(reference, test, None)
}

/// Compares `test` against `reference` on reference bins inside both
/// supports and, when given, inside `band = (f_lo, f_hi)`.
pub fn compare_tpsd_band(reference: &TpsdCurve, test: &TpsdCurve, band: Option<(f64, f64)>) -> Result<MatchReport> {
    if reference.is_empty() || test.is_empty() {
        return Err(Error::invalid("diagnostics", "disjoint supports: empty curve"));
    }
    let mut lo = test.freqs[0].max(reference.freqs[0]);
    let mut hi = test.freqs[test.len() - 1].min(reference.freqs[reference.len() - 1]);
    if let Some((a, b)) = band {
        lo = lo.max(a);
        hi = hi.min(b);
    }
    let idx: Vec<usize> = (0..reference.len())
        .filter(|&i| reference.freqs[i] >= lo && reference.freqs[i] <= hi && reference.freqs[i] > 0.0)
        .collect();
    if idx.is_empty() {
        return Err(Error::invalid(
            "diagnostics",
            format!("disjoint supports: no reference bin in [{lo:e}, {hi:e}] Hz"),
        ));
    }

    let f: Vec<f64> = idx.iter().map(|&i| reference.freqs[i]).collect();
    let s_ref: Vec<f64> = idx.iter().map(|&i| reference.power[i]).collect();
    let s_test: Vec<f64> = f.iter().map(|&fi| interpolate(test, fi)).collect();

    // Trapezoid rule in ln f on the pre-multiplied curves.
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..f.len() {
        let du = (f[k] / f[k - 1]).ln();
        let diff = |j: usize| f[j] * (s_test[j] - s_ref[j]).abs();
        num += 0.5 * du * (diff(k) + diff(k - 1));
        den += 0.5 * du * (f[k] * s_ref[k] + f[k - 1] * s_ref[k - 1]);
    }
    if f.len() == 1 {
        num = (s_test[0] - s_ref[0]).abs();
        den = s_ref[0];
    }

    let p_ref: f64 = s_ref.iter().sum();
    let p_test: f64 = s_test.iter().sum();

    let mut bands: Vec<(i64, f64, f64)> = Vec::new();
    for k in 0..f.len() {
        let id = (BANDS_PER_DECADE * f[k].log10()).floor() as i64;
        match bands.last_mut() {
            Some(b) if b.0 == id => {
                b.1 += s_ref[k];
                b.2 += s_test[k];
            }
            _ => bands.push((id, s_ref[k], s_test[k])),
        }
    }
    let max_band_log_ratio = bands
        .iter()
        .map(|&(_, r, t)| {
            if r == t {
                0.0
            } else if r == 0.0 || t == 0.0 {
                f64::INFINITY
            } else {
                (t / r).ln().abs()
            }
        })
        .fold(0.0f64, f64::max);

    Ok(MatchReport {
        integrated_error: ratio_or_zero(num, den),
        total_power_error: ratio_or_zero((p_test - p_ref).abs(), p_ref),
        max_band_log_ratio,
        n_bins: f.len(),
        n_bands: bands.len(),
        f_lo: f[0],
        f_hi: f[f.len() - 1],
    })
}
