//! ReVAR: fit a re-whitened vector autoregression to a measured wavefront
//! (OPD) time-series and synthesize arbitrarily long statistically matching
//! series.
//!
//! The analysis chain is `X → (remove TTP) → PCA whitening → Z → VAR
//! residuals → rewhitening → W`, with `W` close to unit white noise. Synthesis
//! runs the chain backwards from fresh Gaussian noise and then reshapes the
//! leading modes' spectra to restore correlation beyond the VAR memory.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod demo;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod io;
pub mod kolmogorov;
pub mod linalg;
pub mod longrange;
pub mod model;
pub mod preprocess;
pub mod rewhiten;
pub mod series;
pub mod synthesis;
pub mod var;
pub mod whitening;

pub use error::{Error, Result};
pub use fit::{fit_revar, FitConfig, FitSummary, OrderSelection};
pub use model::{load_model, save_model, ReVarModel};
pub use series::{FlowConditions, Geometry, WavefrontSeries};
pub use synthesis::{generate_noise, synthesize, SynthesisRequest};
