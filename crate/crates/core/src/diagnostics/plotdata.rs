//! Tab-separated plot data: one column group `(f, St, S, St·S)` per curve.
//!
//! ```text
//! # revar tpsd plot data
//! # quantity: opd
//! # strouhal_scale: 2.5e-4
//! # columns: train.f\ttrain.st\ttrain.S\ttrain.stS\tsynth.f\t...
//! 1e0\t2.5e-4\t...
//! ```
//!
//! Shorter curves are padded with `nan`.

use std::fmt::Write as _;
use std::path::Path;

use super::compare::strouhal_premultiply;
use super::welch::TpsdCurve;
use crate::error::{Error, Result};
use crate::series::FlowConditions;

const TITLE: &str = "revar tpsd plot data";
const FIELDS: [&str; 4] = ["f", "st", "S", "stS"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub comments: Vec<(String, String)>,
    pub curves: Vec<(String, TpsdCurve)>,
}

impl PlotData {
    pub fn curve(&self, label: Option<&str>) -> Result<&TpsdCurve> {
        match label {
            None => self.curves.first().map(|c| &c.1),
            Some(l) => self.curves.iter().find(|c| c.0 == l).map(|c| &c.1),
        }
        .ok_or_else(|| Error::invalid("diagnostics", format!("no curve labeled {label:?} in plot data")))
    }
}

/// Writes labeled curves. Without flow conditions the Strouhal column
/// equals the frequency (unit scale), which is noted in the header.
pub fn export_plotdata(
    curves: &[(&str, &TpsdCurve)],
    flow: Option<&FlowConditions>,
    comments: &[(String, String)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    for (label, _) in curves {
        if label.is_empty() || label.contains(['\t', '\n', '.']) {
            return Err(Error::invalid("diagnostics", format!("invalid curve label '{label}'")));
        }
    }
    let unit = FlowConditions { u_inf: 1.0, delta: 1.0 };
    let flow = flow.unwrap_or(&unit);

    let mut out = String::new();
    writeln!(out, "# {TITLE}").unwrap();
    for (k, v) in comments {
        writeln!(out, "# {k}: {}", v.replace('\n', " ")).unwrap();
    }
    writeln!(out, "# strouhal_scale: {:e}", flow.strouhal_scale()).unwrap();
    let names: Vec<String> = curves
        .iter()
        .flat_map(|(label, _)| FIELDS.iter().map(move |f| format!("{label}.{f}")))
        .collect();
    writeln!(out, "# columns: {}", names.join("\t")).unwrap();

    let strouhal: Vec<_> = curves.iter().map(|(_, c)| strouhal_premultiply(c, flow)).collect();
    let rows = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for k in 0..rows {
        let mut cells = Vec::with_capacity(4 * curves.len());
        for ((_, c), s) in curves.iter().zip(&strouhal) {
            if k < c.len() {
                cells.extend([c.freqs[k], s.st[k], c.power[k], s.premultiplied[k]].map(|v| format!("{v:e}")));
            } else {
                cells.extend(std::iter::repeat_n("nan".to_string(), 4));
            }
        }
        writeln!(out, "{}", cells.join("\t")).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_plotdata(path: impl AsRef<Path>) -> Result<PlotData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_plotdata(&text)
}

pub fn parse_plotdata(text: &str) -> Result<PlotData> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_start_matches('#').trim() == TITLE => {}
        _ => {
            return Err(Error::format(
                "title",
                None,
                format!("not a plot data file (expected '# {TITLE}')"),
            ))
        }
    }
    let mut comments = Vec::new();
    let mut labels: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines {
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(cols) = rest.strip_prefix("columns:") {
                let names: Vec<&str> = cols.trim().split('\t').collect();
                if !names.len().is_multiple_of(4) {
                    return Err(Error::format("columns", None, "column count is not a multiple of 4"));
                }
                let mut group_labels = Vec::new();
                for (i, chunk) in names.chunks(4).enumerate() {
                    let label = chunk[0].strip_suffix(".f").ok_or_else(|| {
                        Error::format("columns", None, format!("group {i} does not start with '<label>.f'"))
                    })?;
                    group_labels.push(label.to_string());
                }
                columns = vec![Vec::new(); names.len()];
                labels = Some(group_labels);
            } else if let Some((k, v)) = rest.split_once(": ") {
                comments.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if labels.is_none() {
            return Err(Error::format("columns", None, "data row before column header"));
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(Error::format(
                format!("line {}", lineno + 1),
                None,
                format!("expected {} columns, found {}", columns.len(), cells.len()),
            ));
        }
        for (col, cell) in columns.iter_mut().zip(cells) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::format(format!("line {}", lineno + 1), None, format!("bad number '{cell}'")))?;
            col.push(v);
        }
    }
    let labels = labels.ok_or_else(|| Error::format("columns", None, "missing column header"))?;
    let curves = labels
        .into_iter()
        .enumerate()
        .map(|(g, label)| {
            let (f, s) = (&columns[4 * g], &columns[4 * g + 2]);
            let keep: Vec<usize> = (0..f.len()).filter(|&k| !f[k].is_nan()).collect();
            let freqs: Vec<f64> = keep.iter().map(|&k| f[k]).collect();
            let power = keep.iter().map(|&k| s[k]).collect();
            let df = match freqs.len() {
                0 => 0.0,
                1 => freqs[0],
                _ => freqs[1] - freqs[0],
            };
            (label, TpsdCurve { freqs, power, df })
        })
        .collect();
    Ok(PlotData { comments, curves })
}
