//! The `revar` command line.

mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{key_help, RunConfig};

use crate::demo::{demo_series, DemoParams};
use crate::diagnostics::{compare_tpsd_band, export_plotdata, quantity_tpsd, read_plotdata, MatchReport, Quantity};
use crate::error::{Error, Result};
use crate::fit::fit_revar;
use crate::io::{load_series, peek_kind, save_series, FileKind};
use crate::kolmogorov::{frozen_flow_series, TurbulenceParams, DEFAULT_SUBHARMONIC_LEVELS, DEFAULT_WAVELENGTH};
use crate::model::{load_model, save_model};
use crate::series::{FlowConditions, WavefrontSeries};
use crate::synthesis::{synthesize, SynthesisRequest};

#[derive(Debug, Parser)]
#[command(
    name = "revar",
    version,
    about = "Fit and synthesize wavefront time-series with a re-whitened vector autoregression",
    after_help = format!(
        "Exit codes: 0 success, 2 I/O, 3 invalid input, 4 numerical failure.\n\nConfig file keys (`key = value`, flags win):\n{}",
        key_help()
    )
)]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log more to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a training series.
    Fit(FitArgs),
    /// Synthesize a series from a fitted model.
    Synth(SynthArgs),
    /// Aperture-averaged temporal PSD of a series, written as plot data.
    Tpsd(TpsdArgs),
    /// Compare two TPSD plot-data files.
    Compare(CompareArgs),
    /// Summarize a series or model file.
    Info(InfoArgs),
    /// Kolmogorov / von Kármán baseline: frozen-flow phase screens as OPD.
    Kolmo(KolmoArgs),
    /// Write the bundled planted training set.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training series (.wfs).
    pub train: PathBuf,
    /// Model output path (.rvm).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub energy_threshold: Option<f64>,
    /// VAR order or `auto`.
    #[arg(long)]
    pub order: Option<String>,
    #[arg(long)]
    pub max_order: Option<usize>,
    #[arg(long)]
    pub k_modes: Option<usize>,
    #[arg(long)]
    pub segment_len: Option<usize>,
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Keep piston, tip and tilt in the training data.
    #[arg(long)]
    pub keep_ttp: bool,
    /// Swap x and y before fitting.
    #[arg(long)]
    pub transpose: bool,
    /// Shrink an unstable VAR into the stable region.
    #[arg(long)]
    pub shrink: bool,
    /// Print the fit summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_longrange: bool,
    /// Allow shrinking an unstable model before simulating.
    #[arg(long)]
    pub shrink: bool,
}

#[derive(Debug, Args)]
pub struct TpsdArgs {
    pub series: PathBuf,
    /// `opd` or `theta_x`.
    #[arg(long)]
    pub quantity: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub u_inf: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub segment_len: Option<usize>,
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Analyze the series without removing piston, tip and tilt.
    #[arg(long)]
    pub keep_ttp: bool,
    /// Curve label (defaults to the quantity).
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub reference: PathBuf,
    pub test: PathBuf,
    #[arg(long)]
    pub ref_label: Option<String>,
    #[arg(long)]
    pub test_label: Option<String>,
    /// Restrict to `LO HI` Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub band: Option<Vec<f64>>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct KolmoArgs {
    /// Fried parameter (m).
    #[arg(long)]
    pub r0: f64,
    /// Outer scale (m); infinite when omitted.
    #[arg(long = "L0")]
    pub outer_scale: Option<f64>,
    /// Inner scale (m); zero when omitted.
    #[arg(long = "l0")]
    pub inner_scale: Option<f64>,
    /// Grid side, a power of two >= 16.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dx: f64,
    /// Frozen-flow speed (m/s); 0 when omitted.
    #[arg(long)]
    pub velocity: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub wavelength: Option<f64>,
    /// Subharmonic levels for low-frequency compensation (0 disables).
    #[arg(long, default_value_t = DEFAULT_SUBHARMONIC_LEVELS)]
    pub subharmonics: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8192)]
    pub frames: usize,
    /// Grid side.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the full square instead of a circular aperture.
    #[arg(long)]
    pub full_aperture: bool,
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(path) => RunConfig::from_file(path),
        None => Ok(RunConfig::default()),
    }
}

/// Runs one subcommand, writing human summaries to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let base = base_config(cli)?;
    let mut flags = RunConfig::default();
    match &cli.command {
        Command::Fit(a) => {
            flags.set_opt("energy_threshold", a.energy_threshold)?;
            flags.set_opt("order", a.order.as_deref())?;
            flags.set_opt("max_order", a.max_order)?;
            flags.set_opt("k_modes", a.k_modes)?;
            flags.set_opt("segment_len", a.segment_len)?;
            flags.set_opt("overlap", a.overlap)?;
            flags.set_opt("remove_ttp", a.keep_ttp.then_some(false))?;
            flags.set_opt("transpose", a.transpose.then_some(true))?;
            flags.set_opt("shrink", a.shrink.then_some(true))?;
            cmd_fit(a, &base.merged(&flags))
        }
        Command::Synth(a) => {
            flags.set_opt("steps", a.steps)?;
            flags.set_opt("seed", a.seed)?;
            flags.set_opt("longrange", a.no_longrange.then_some(false))?;
            flags.set_opt("shrink", a.shrink.then_some(true))?;
            cmd_synth(a, &base.merged(&flags))
        }
        Command::Tpsd(a) => {
            flags.set_opt("quantity", a.quantity.as_deref())?;
            flags.set_opt("u_inf", a.u_inf)?;
            flags.set_opt("delta", a.delta)?;
            flags.set_opt("segment_len", a.segment_len)?;
            flags.set_opt("overlap", a.overlap)?;
            flags.set_opt("remove_ttp", a.keep_ttp.then_some(false))?;
            cmd_tpsd(a, &base.merged(&flags))
        }
        Command::Compare(a) => cmd_compare(a),
        Command::Info(a) => cmd_info(&a.path),
        Command::Kolmo(a) => {
            flags.set_opt("steps", a.steps)?;
            flags.set_opt("seed", a.seed)?;
            flags.set_opt("wavelength", a.wavelength)?;
            cmd_kolmo(a, &base.merged(&flags))
        }
        Command::Demo(a) => {
            flags.set_opt("seed", a.seed)?;
            cmd_demo(a, &base.merged(&flags))
        }
    }
}

fn cmd_fit(a: &FitArgs, cfg: &RunConfig) -> Result<()> {
    let fit_cfg = cfg.fit_config()?;
    let series = load_series(&a.train)?;
    let (mut model, summary) = fit_revar(&series, &fit_cfg)?;
    model.metadata.extend(cfg.metadata());
    save_model(&model, &a.out)?;
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        );
        return Ok(());
    }
    println!("model written to {}", a.out.display());
    println!("  training frames   {}", summary.n_frames);
    println!("  in-mask pixels    {}", summary.n_pixels);
    println!(
        "  rank r            {} (retained energy {:.6})",
        summary.rank, summary.retained_energy
    );
    println!("  VAR order p       {}", summary.order);
    println!(
        "  spectral radius   {:.6} ({})",
        summary.spectral_radius,
        if summary.stable { "stable" } else { "UNSTABLE" }
    );
    if let Some(rho) = summary.shrink_factor {
        println!("  shrink factor     {rho:.9}");
    }
    let w = summary.whiteness;
    println!(
        "  residual whiteness  max|mean| {:.3e}  max|cov-I| {:.3e}  max lag-1 corr {:.3e}",
        w.max_abs_mean, w.max_cov_deviation, w.max_lag1_correlation
    );
    match summary.longrange_segment_len {
        Some(seg) => println!("  long-range bank   {} modes, segment {seg}", summary.longrange_modes),
        None => println!("  long-range bank   none"),
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, cfg: &RunConfig) -> Result<()> {
    let steps = cfg
        .usize("steps")
        .ok_or_else(|| Error::invalid("synthesis", "number of steps not given (--steps)"))?;
    let req = SynthesisRequest {
        n_steps: steps,
        seed: cfg.u64("seed").unwrap_or(0),
        apply_longrange: cfg.flag("longrange", true),
        allow_shrink: cfg.flag("shrink", false),
    };
    if req.n_steps == 0 {
        return Err(Error::invalid("synthesis", "steps must be at least 1"));
    }
    let model = load_model(&a.model)?;
    let mut series = synthesize(&model, &req)?;
    series.metadata.extend(cfg.metadata());
    save_series(&series, &a.out)?;
    println!(
        "{} frames (seed {}) written to {}",
        series.n_frames,
        req.seed,
        a.out.display()
    );
    Ok(())
}

fn flow_from_metadata(series: &WavefrontSeries) -> Option<FlowConditions> {
    let u = series.metadata.get("u_inf")?.parse().ok()?;
    let d = series.metadata.get("delta")?.parse().ok()?;
    FlowConditions::new(u, d).ok()
}

fn cmd_tpsd(a: &TpsdArgs, cfg: &RunConfig) -> Result<()> {
    let quantity: Quantity = cfg.get("quantity").unwrap_or("opd").parse()?;
    let flow_cfg = cfg.flow()?;
    let series = load_series(&a.series)?;
    let params = cfg.welch(series.n_frames)?;
    let ttp = cfg.flag("remove_ttp", true);
    let curve = quantity_tpsd(&series, quantity, ttp, params)?;
    let flow = flow_cfg.or_else(|| flow_from_metadata(&series));
    let label = a.label.clone().unwrap_or_else(|| quantity.to_string());
    let mut comments = vec![
        ("quantity".to_string(), quantity.to_string()),
        ("source".to_string(), series.label.clone()),
        ("segment_len".to_string(), params.segment_len.to_string()),
        ("overlap".to_string(), params.overlap.to_string()),
        ("ttp_removed".to_string(), ttp.to_string()),
    ];
    if flow.is_none() {
        comments.push(("strouhal".to_string(), "no flow conditions, unit scale".to_string()));
    }
    comments.extend(cfg.metadata());
    export_plotdata(&[(&label, &curve)], flow.as_ref(), &comments, &a.out)?;
    println!(
        "{} TPSD of {} ({} bins, total power {:.6e}) written to {}",
        quantity,
        a.series.display(),
        curve.len(),
        curve.total_power(),
        a.out.display()
    );
    Ok(())
}

fn print_report(r: &MatchReport) {
    println!(
        "band               {:.6e} .. {:.6e} Hz ({} bins, {} bands)",
        r.f_lo, r.f_hi, r.n_bins, r.n_bands
    );
    println!("integrated error   {:.6e}", r.integrated_error);
    println!("total power error  {:.6e}", r.total_power_error);
    println!("max band log-ratio {:.6e}", r.max_band_log_ratio);
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let reference = read_plotdata(&a.reference)?;
    let test = read_plotdata(&a.test)?;
    let band = a.band.as_ref().map(|b| (b[0], b[1]));
    let report = compare_tpsd_band(
        reference.curve(a.ref_label.as_deref())?,
        test.curve(a.test_label.as_deref())?,
        band,
    )?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print_report(&report);
    }
    Ok(())
}

fn cmd_info(path: &Path) -> Result<()> {
    match peek_kind(path)? {
        FileKind::Series => {
            let s = load_series(path)?;
            let g = &s.geometry;
            println!("series {}", path.display());
            println!("  frames T     {}", s.n_frames);
            println!("  grid H x W   {} x {} ({} in mask)", g.height, g.width, g.n_valid());
            println!("  dt           {:e} s", g.dt);
            println!("  dx           {:e} m", g.dx);
            println!("  label        {}", s.label);
            for (k, v) in &s.metadata {
                println!("  meta.{k} = {v}");
            }
        }
        FileKind::Model => {
            let m = load_model(path)?;
            let g = &m.geometry;
            let st = m.var.stability();
            println!("model {}", path.display());
            println!("  grid H x W   {} x {} ({} in mask)", g.height, g.width, g.n_valid());
            println!("  dt           {:e} s", g.dt);
            println!("  dx           {:e} m", g.dx);
            println!("  rank r       {}", m.rank());
            println!("  VAR order p  {}", m.var.order());
            println!(
                "  radius       {:.6} ({})",
                st.spectral_radius,
                if st.stable { "stable" } else { "UNSTABLE" }
            );
            match &m.longrange {
                Some(lr) => println!(
                    "  long-range   {} modes, segment {}",
                    lr.k_modes(),
                    lr.params.segment_len
                ),
                None => println!("  long-range   none"),
            }
            for (k, v) in &m.metadata {
                println!("  meta.{k} = {v}");
            }
        }
    }
    Ok(())
}

fn cmd_kolmo(a: &KolmoArgs, cfg: &RunConfig) -> Result<()> {
    let params = TurbulenceParams {
        r0: a.r0,
        outer_scale: a.outer_scale.unwrap_or(f64::INFINITY),
        inner_scale: a.inner_scale.unwrap_or(0.0),
        n: a.n,
        dx: a.dx,
        subharmonic_levels: a.subharmonics,
    };
    let steps = cfg.usize("steps").unwrap_or(1);
    let seed = cfg.u64("seed").unwrap_or(0);
    let wavelength = cfg.f64("wavelength").unwrap_or(DEFAULT_WAVELENGTH);
    let mut series = frozen_flow_series(&params, a.velocity.unwrap_or(0.0), a.dt, steps, wavelength, seed)?;
    series.metadata.extend(cfg.metadata());
    save_series(&series, &a.out)?;
    println!(
        "{} x {} x {} OPD frames written to {}",
        steps,
        a.n,
        a.n,
        a.out.display()
    );
    Ok(())
}

fn cmd_demo(a: &DemoArgs, cfg: &RunConfig) -> Result<()> {
    let params = DemoParams {
        height: a.size,
        width: a.size,
        n_frames: a.frames,
        circular: !a.full_aperture,
        seed: cfg.u64("seed").unwrap_or(0),
        ..DemoParams::default()
    };
    let mut series = demo_series(&params)?;
    series.metadata.extend(cfg.metadata());
    save_series(&series, &a.out)?;
    println!(
        "demo series ({} frames, {}x{}) written to {}",
        params.n_frames,
        params.height,
        params.width,
        a.out.display()
    );
    Ok(())
}
