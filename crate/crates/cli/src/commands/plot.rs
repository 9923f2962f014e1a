//! Deterministic SVG scatter of per-type ambiguity against contextual
//! uncertainty with the robust fit line.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::write_manifest;
use crate::tsv::{read_rows, JoinedRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Continuous,
    Wordnet,
}

impl Measure {
    fn report_name(self) -> &'static str {
        match self {
            Measure::Continuous => "continuous",
            Measure::Wordnet => "wordnet",
        }
    }

    fn x_label(self) -> &'static str {
        match self {
            Measure::Continuous => "lexical ambiguity, Gaussian bound (bits)",
            Measure::Wordnet => "lexical ambiguity, log2 senses (bits)",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlotConfig {
    pub report: PathBuf,
    pub joined: PathBuf,
    pub out: PathBuf,
    pub measure: Measure,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 55.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

fn padded_range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Round tick spacing of 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-12 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders the scatter plot as a standalone SVG document.
pub fn render_svg(points: &[(f64, f64)], line: Option<Line>, x_label: &str, y_label: &str) -> String {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (x0, x1) = padded_range(&xs);
    let (y0, y1) = padded_range(&ys);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::with_capacity(1024 + points.len() * 64);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );
    let _ = writeln!(s, r##"<g fill="#1f77b4" fill-opacity="0.6">"##);
    for &(x, y) in points {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, sx(x), sy(y));
    }
    s.push_str("</g>\n");
    if let Some(l) = line {
        let _ = writeln!(
            s,
            r##"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-width="2" clip-path="url(#plot)"/>"##,
            sx(x0),
            sy(l.intercept + l.slope * x0),
            sx(x1),
            sy(l.intercept + l.slope * x1)
        );
    }
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath></defs>"#
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fit_from_report(report: &serde_json::Value, measure: Measure) -> Option<Line> {
    report["robust_fits"].as_array()?.iter().find_map(|f| {
        if f["measure"].as_str()? != measure.report_name() {
            return None;
        }
        Some(Line {
            slope: f["slope"].as_f64()?,
            intercept: f["intercept"].as_f64()?,
        })
    })
}

pub fn run(config: &PlotConfig) -> Result<usize> {
    let text = std::fs::read_to_string(&config.report).map_err(|e| CliError::io(&config.report, e))?;
    let report: serde_json::Value = serde_json::from_str(&text)?;
    let rows: Vec<JoinedRow> = read_rows(&config.joined)?;
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            let x = match config.measure {
                Measure::Continuous => Some(r.ambiguity_bits),
                Measure::Wordnet => r.wordnet_bits,
            }?;
            Some((x, r.ctx_surprisal_bits))
        })
        .collect();
    if points.is_empty() {
        return Err(CliError::Data("no points to plot".into()));
    }
    let line = fit_from_report(&report, config.measure);
    if line.is_none() {
        log::warn!("report has no {} robust fit; plotting points only", config.measure.report_name());
    }
    let svg = render_svg(&points, line, config.measure.x_label(), "contextual uncertainty (bits)");
    std::fs::write(&config.out, svg).map_err(|e| CliError::io(&config.out, e))?;
    write_manifest(
        "plot",
        config,
        &[config.report.as_path(), config.joined.as_path()],
        &[config.out.as_path()],
        serde_json::json!({ "points": points.len() }),
    )?;
    Ok(points.len())
}
