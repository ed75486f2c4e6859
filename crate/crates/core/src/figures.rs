//! Deterministic SVG line charts and histogram grids on a fixed 800x400
//! canvas.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 400.0;
const FONT: &str = "sans-serif";

/// Colors for up to ten series, cycled beyond that.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LineSeries {
    pub label: String,
    pub values: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_coord(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" || s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Rounded tick positions covering `[lo, hi]`; always at least two distinct
/// values, padding a degenerate range.
pub fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (lo, hi) = padded(lo, hi);
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    let mut out: Vec<f64> = (first..=last).map(|i| i as f64 * step).collect();
    if out.len() < 2 {
        out = vec![lo, hi];
    }
    out
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.lo) / (self.hi - self.lo) * self.h
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 400" width="800" height="400" font-family="{FONT}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="800" height="400" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="400" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, yticks: &[f64], font: f64) {
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="1"/>"#,
        fmt_coord(f.x0),
        fmt_coord(f.y0),
        fmt_coord(f.w),
        fmt_coord(f.h)
    );
    for &t in yticks {
        let y = fmt_coord(f.y(t));
        let _ = writeln!(
            out,
            r##"<line class="ytick" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#cccccc" stroke-width="0.5"/>"##,
            fmt_coord(f.x0),
            fmt_coord(f.x0 + f.w)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle" font-size="{font}">{}</text>"#,
            fmt_coord(f.x0 - 4.0),
            fmt_tick(t)
        );
    }
}

/// Multi-series line chart. `x_labels` label the first and last points;
/// `ylim` is widened when the data fall outside it.
pub fn line_chart(title: &str, x_labels: &[String], series: &[LineSeries], ylim: Option<(f64, f64)>) -> Result<String> {
    let finite = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return Err(Error::Data(format!("figure `{title}` has no finite values")));
    }
    if let Some((a, b)) = ylim {
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let (lo, hi) = padded(lo, hi);
    let yt = ticks(lo, hi);
    let lo = lo.min(yt[0]);
    let hi = hi.max(yt[yt.len() - 1]);
    let f = Frame {
        x0: 70.0,
        y0: 35.0,
        w: 600.0,
        h: 320.0,
        lo,
        hi,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, &yt, 10.0);

    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let dx = if n > 1 { f.w / (n - 1) as f64 } else { 0.0 };
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(j, v)| format!("{},{}", fmt_coord(f.x0 + j as f64 * dx), fmt_coord(f.y(*v))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = 45.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="682" y1="{ly}" x2="697" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="702" y="{ly}" dominant-baseline="middle" font-size="10">{}</text>"#,
            escape(&s.label)
        );
    }
    if let (Some(first), Some(last)) = (x_labels.first(), x_labels.last()) {
        let yb = fmt_coord(f.y0 + f.h + 14.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{yb}" text-anchor="start" font-size="10">{}</text>"#,
            fmt_coord(f.x0),
            escape(first)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{yb}" text-anchor="end" font-size="10">{}</text>"#,
            fmt_coord(f.x0 + f.w),
            escape(last)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Left edge of the first bin, a multiple of `bin_width`.
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Fixed-width bins aligned to multiples of `bin_width`; non-finite values
/// are dropped.
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Data("histogram bin width must be positive".into()));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Data("histogram of an empty series".into()));
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = (lo / bin_width).floor();
    let nbins = ((hi / bin_width).floor() - first) as usize + 1;
    let mut counts = vec![0usize; nbins];
    for v in finite {
        let b = ((v / bin_width).floor() - first) as usize;
        counts[b.min(nbins - 1)] += 1;
    }
    Ok(Histogram {
        start: first * bin_width,
        bin_width,
        counts,
    })
}

/// Roughly twenty bins across the pooled range of every panel.
pub fn default_bin_width(panels: &[&[f64]]) -> f64 {
    let all = panels.iter().flat_map(|p| p.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if range.is_finite() && range > 0.0 {
        range / 20.0
    } else {
        1.0
    }
}

/// Histogram panels on a 5x2 grid (ten panels fill it).
pub fn histogram_grid(title: &str, panels: &[(String, Histogram)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (cols, pw, ph) = (5usize, 150.0, 150.0);
    for (i, (label, h)) in panels.iter().enumerate() {
        let (c, r) = (i % cols, i / cols);
        let x0 = 15.0 + c as f64 * (pw + 8.0);
        let y0 = 40.0 + r as f64 * (ph + 30.0);
        let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let _ = writeln!(
            out,
            r#"<g class="panel"><text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            fmt_coord(x0 + pw / 2.0),
            fmt_coord(y0 - 3.0),
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="0.5"/>"#,
            fmt_coord(x0),
            fmt_coord(y0),
            fmt_coord(pw),
            fmt_coord(ph)
        );
        let bw = pw / h.counts.len() as f64;
        for (j, &cnt) in h.counts.iter().enumerate() {
            let bh = cnt as f64 / max * (ph - 4.0);
            let _ = writeln!(
                out,
                r##"<rect class="bar" data-count="{cnt}" x="{}" y="{}" width="{}" height="{}" fill="#4c72b0"/>"##,
                fmt_coord(x0 + j as f64 * bw),
                fmt_coord(y0 + ph - bh),
                fmt_coord(bw),
                fmt_coord(bh)
            );
        }
        let lo = h.start;
        let hi = h.start + h.bin_width * h.counts.len() as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="8">{}</text><text x="{}" y="{}" text-anchor="end" font-size="8">{}</text></g>"#,
            fmt_coord(x0),
            fmt_coord(y0 + ph + 10.0),
            fmt_tick(lo),
            fmt_coord(x0 + pw),
            fmt_coord(y0 + ph + 10.0),
            fmt_tick(hi)
        );
    }
    out.push_str("</svg>\n");
    out
}
