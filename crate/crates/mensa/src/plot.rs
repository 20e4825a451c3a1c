//! Deterministic SVG charts for run artifacts.
//!
//! Two charts per run: the per-epoch loss terms, and the domain-confusion
//! ramp with its closed-form curve overlaid. Rendering is plain string
//! assembly, so the same inputs always produce identical bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::EtaSchedule;
use crate::trainer::LOSS_CSV_HEADER;

/// Loss-table columns read back from a run's CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurves {
    pub epochs: Vec<usize>,
    pub cls: Vec<f64>,
    pub dc: Vec<f64>,
    pub mmd: Vec<f64>,
    pub mixup: Vec<f64>,
    pub total: Vec<f64>,
    pub eta: Vec<f64>,
}

impl LossCurves {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Parse a loss CSV; the header must match the trainer's output and at least
/// one data row must be present.
pub fn read_losses_csv(path: &Path) -> Result<LossCurves> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == LOSS_CSV_HEADER => {}
        Some(h) => {
            return Err(Error::Data {
                path: path.into(),
                reason: format!("unexpected header `{h}`, expected `{LOSS_CSV_HEADER}`"),
            })
        }
        None => {
            return Err(Error::Data { path: path.into(), reason: "file is empty".into() })
        }
    }
    let mut curves = LossCurves {
        epochs: Vec::new(),
        cls: Vec::new(),
        dc: Vec::new(),
        mmd: Vec::new(),
        mixup: Vec::new(),
        total: Vec::new(),
        eta: Vec::new(),
    };
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Data {
                path: path.into(),
                reason: format!("line {}: expected 7 fields, got {}", idx + 2, fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| Error::Data {
                path: path.into(),
                reason: format!("line {}: bad number `{}`", idx + 2, fields[i]),
            })
        };
        let epoch = fields[0].parse::<usize>().map_err(|_| Error::Data {
            path: path.into(),
            reason: format!("line {}: bad epoch `{}`", idx + 2, fields[0]),
        })?;
        curves.epochs.push(epoch);
        curves.cls.push(num(1)?);
        curves.dc.push(num(2)?);
        curves.mmd.push(num(3)?);
        curves.mixup.push(num(4)?);
        curves.total.push(num(5)?);
        curves.eta.push(num(6)?);
    }
    if curves.is_empty() {
        return Err(Error::Data { path: path.into(), reason: "no data rows".into() });
    }
    Ok(curves)
}

/// Closed-form ramp values at epochs 0..=total, so the final entry is the
/// configured end value.
pub fn eta_overlay(schedule: &EtaSchedule, total_epochs: usize) -> Vec<f64> {
    (0..=total_epochs).map(|e| schedule.eta(e, total_epochs)).collect()
}

// ── SVG assembly ────────────────────────────────────────────────────────────

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 45.0;
const MARGIN_B: f64 = 55.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    values: &'a [f64],
    dashed: bool,
}

fn fmt(v: f64) -> String {
    // Fixed short form keeps the output stable and readable.
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && (a >= 10000.0 || a < 0.001) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s.is_empty() || s == "-" {
            "0".to_string()
        } else {
            s.to_string()
        }
    }
}

fn line_chart(title: &str, y_label: &str, x_max: f64, series: &[Series]) -> String {
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &v in s.values {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    y_min = y_min.min(0.0);
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_max += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |e: f64| MARGIN_L + plot_w * (e / x_max.max(1.0));
    let y_of = |v: f64| MARGIN_T + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"13\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"26\" text-anchor=\"middle\" font-size=\"17\">{title}</text>\n",
        MARGIN_L + plot_w / 2.0
    );

    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let yv = y_min + frac * (y_max - y_min);
        let y = y_of(yv);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            fmt(MARGIN_L),
            fmt(y),
            fmt(MARGIN_L + plot_w),
            fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 8.0),
            fmt(y + 4.0),
            fmt_tick(yv)
        ));
        let xv = frac * x_max;
        let x = x_of(xv);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(MARGIN_T + plot_h + 20.0),
            fmt_tick(xv)
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(MARGIN_L),
        fmt(MARGIN_T + plot_h),
        fmt(MARGIN_L),
        fmt(MARGIN_T + plot_h),
        fmt(MARGIN_L + plot_w),
        fmt(MARGIN_T + plot_h)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{y_label}</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 14.0),
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0)
    ));

    for (i, s) in series.iter().enumerate() {
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(e, &v)| format!("{},{}", fmt(x_of(e as f64)), fmt(y_of(v))))
            .collect();
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{dash} points=\"{}\"/>\n",
            s.color,
            points.join(" ")
        ));
        let ly = MARGIN_T + 16.0 * i as f64 + 10.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.8\"{dash}/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(MARGIN_L + plot_w + 12.0),
            fmt(ly),
            fmt(MARGIN_L + plot_w + 40.0),
            fmt(ly),
            s.color,
            fmt(MARGIN_L + plot_w + 46.0),
            fmt(ly + 4.0),
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Chart of every loss term over epochs.
pub fn render_loss_chart(curves: &LossCurves) -> String {
    let x_max = (curves.len().saturating_sub(1)).max(1) as f64;
    let series = [
        Series { label: "classification", color: "#1f77b4", values: &curves.cls, dashed: false },
        Series { label: "domain confusion", color: "#d62728", values: &curves.dc, dashed: false },
        Series { label: "discrepancy", color: "#2ca02c", values: &curves.mmd, dashed: false },
        Series { label: "mixup", color: "#9467bd", values: &curves.mixup, dashed: false },
        Series { label: "total", color: "#111111", values: &curves.total, dashed: false },
    ];
    line_chart("Training losses", "loss", x_max, &series)
}

/// Chart of the logged ramp values with the closed form drawn through the
/// configured endpoint.
pub fn render_eta_chart(
    curves: &LossCurves,
    schedule: &EtaSchedule,
    total_epochs: usize,
) -> String {
    let overlay = eta_overlay(schedule, total_epochs);
    let x_max = total_epochs.max(1) as f64;
    let series = [
        Series { label: "logged", color: "#ff7f0e", values: &curves.eta, dashed: false },
        Series { label: "closed form", color: "#555555", values: &overlay, dashed: true },
    ];
    line_chart("Confusion-weight ramp", "eta", x_max, &series)
}

/// Render both charts from a run's CSV into `losses.svg` and `eta.svg`.
pub fn plot_run(
    csv_path: &Path,
    out_dir: &Path,
    schedule: &EtaSchedule,
    total_epochs: usize,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let curves = read_losses_csv(csv_path)?;
    let losses_path = out_dir.join("losses.svg");
    let eta_path = out_dir.join("eta.svg");
    fs::write(&losses_path, render_loss_chart(&curves)).map_err(|e| Error::io(&losses_path, e))?;
    fs::write(&eta_path, render_eta_chart(&curves, schedule, total_epochs))
        .map_err(|e| Error::io(&eta_path, e))?;
    Ok((losses_path, eta_path))
}
