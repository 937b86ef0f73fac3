//! Flat `key = value` run configuration. Command-line flags override file
//! values; the merged result is echoed into every output file.

use std::collections::BTreeMap;
use std::path::Path;

use crate::diagnostics::{WelchParams, DEFAULT_OVERLAP, MIN_SEGMENT_LEN};
use crate::error::{Error, Result};
use crate::fit::{FitConfig, OrderSelection};
use crate::series::FlowConditions;
use crate::var::DEFAULT_MAX_ORDER;
use crate::whitening::DEFAULT_ENERGY_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Count,
    Seed,
    Flag,
    Order,
    Quantity,
}

/// Every accepted key, its type and what it controls.
const KEYS: &[(&str, Kind, &str)] = &[
    (
        "energy_threshold",
        Kind::Float,
        "PCA retained-energy fraction (default 0.999)",
    ),
    (
        "order",
        Kind::Order,
        "VAR order, or 'auto' for BIC selection (default 3)",
    ),
    ("max_order", Kind::Count, "largest order tried by 'auto' (default 10)"),
    (
        "k_modes",
        Kind::Count,
        "modes given the long-range correction (default min(r, 10))",
    ),
    (
        "segment_len",
        Kind::Count,
        "Welch segment length (default 2^floor(log2(T/8)), >= 64)",
    ),
    ("overlap", Kind::Float, "Welch segment overlap fraction (default 0.5)"),
    ("u_inf", Kind::Float, "free-stream velocity for Strouhal scaling (m/s)"),
    (
        "delta",
        Kind::Float,
        "boundary-layer thickness for Strouhal scaling (m)",
    ),
    (
        "remove_ttp",
        Kind::Flag,
        "remove piston/tip/tilt before fitting or TPSD (default true)",
    ),
    ("transpose", Kind::Flag, "swap x and y before fitting (default false)"),
    (
        "shrink",
        Kind::Flag,
        "shrink an unstable VAR into the stable region (default false)",
    ),
    (
        "longrange",
        Kind::Flag,
        "apply the long-range correction when synthesizing (default true)",
    ),
    ("seed", Kind::Seed, "random seed"),
    ("steps", Kind::Count, "frames to generate"),
    (
        "quantity",
        Kind::Quantity,
        "TPSD quantity: opd or theta_x (default opd)",
    ),
    (
        "wavelength",
        Kind::Float,
        "phase-to-OPD wavelength for kolmo (default 532e-9 m)",
    ),
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn kind_of(key: &str) -> Result<Kind> {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|(_, kind, _)| *kind)
        .ok_or_else(|| Error::invalid("config", format!("unknown key '{key}'")))
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

fn check(key: &str, kind: Kind, value: &str) -> Result<()> {
    let ok = match kind {
        Kind::Float => value.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::Count => value.parse::<usize>().is_ok(),
        Kind::Seed => value.parse::<u64>().is_ok(),
        Kind::Flag => parse_bool(value).is_some(),
        Kind::Order => value == "auto" || value.parse::<usize>().is_ok_and(|p| p >= 1),
        Kind::Quantity => matches!(value, "opd" | "theta_x"),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid("config", format!("invalid value '{value}' for '{key}'")))
    }
}

/// Human-readable list of keys for `--help`.
pub fn key_help() -> String {
    KEYS.iter()
        .map(|(k, _, doc)| format!("  {k:<17} {doc}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid("config", format!("line {}: expected 'key = value'", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::invalid("config", format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let value = value.into();
        check(key, kind_of(key)?, &value)?;
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    /// Sets `key` when `value` is present.
    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v.to_string()),
            None => Ok(()),
        }
    }

    /// Values in `overrides` replace ours.
    pub fn merged(mut self, overrides: &RunConfig) -> Self {
        for (k, v) in &overrides.values {
            self.values.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    // Values are checked on insertion, so the parses below cannot fail.
    pub fn f64(&self, key: &str) -> Option<f64> {
        self.get(key).map(|v| v.parse().unwrap())
    }

    pub fn usize(&self, key: &str) -> Option<usize> {
        self.get(key).map(|v| v.parse().unwrap())
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.get(key).map(|v| v.parse().unwrap())
    }

    pub fn flag(&self, key: &str, default: bool) -> bool {
        self.get(key).and_then(parse_bool).unwrap_or(default)
    }

    /// Entries as `config.<key>` metadata pairs.
    pub fn metadata(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .map(|(k, v)| (format!("config.{k}"), v.clone()))
            .collect()
    }

    pub fn welch(&self, n_frames: usize) -> Result<WelchParams> {
        let mut params = WelchParams::for_length(n_frames);
        if let Some(s) = self.usize("segment_len") {
            params.segment_len = s;
        }
        if let Some(o) = self.f64("overlap") {
            params.overlap = o;
        }
        params.validate()?;
        Ok(params)
    }

    /// Strouhal scaling, present only when both `u_inf` and `delta` are set.
    pub fn flow(&self) -> Result<Option<FlowConditions>> {
        match (self.f64("u_inf"), self.f64("delta")) {
            (Some(u), Some(d)) => FlowConditions::new(u, d).map(Some),
            (None, None) => Ok(None),
            _ => Err(Error::invalid("config", "u_inf and delta must be given together")),
        }
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let energy_threshold = self.f64("energy_threshold").unwrap_or(DEFAULT_ENERGY_THRESHOLD);
        if !(energy_threshold > 0.0 && energy_threshold <= 1.0) {
            return Err(Error::invalid(
                "config",
                format!("energy_threshold {energy_threshold} outside (0, 1]"),
            ));
        }
        let max_order = self.usize("max_order").unwrap_or(DEFAULT_MAX_ORDER);
        let order = match self.get("order") {
            Some("auto") => {
                if max_order == 0 {
                    return Err(Error::invalid("config", "max_order must be at least 1"));
                }
                OrderSelection::Bic { max_order }
            }
            Some(p) => OrderSelection::Fixed(p.parse().unwrap()),
            None => FitConfig::default().order,
        };
        let segment_len = self.usize("segment_len");
        let overlap = self.f64("overlap").unwrap_or(DEFAULT_OVERLAP);
        WelchParams {
            segment_len: segment_len.unwrap_or(MIN_SEGMENT_LEN),
            overlap,
        }
        .validate()?;
        Ok(FitConfig {
            energy_threshold,
            order,
            k_modes: self.usize("k_modes"),
            segment_len,
            overlap,
            remove_ttp: self.flag("remove_ttp", true),
            transpose: self.flag("transpose", false),
            shrink_unstable: self.flag("shrink", false),
        })
    }
}
