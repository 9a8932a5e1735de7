//! Artifact plumbing: config hashing, JSON metadata stamps, and a small
//! hand-emitted SVG plotter for log-log series.

use crate::grid::GridSpec;
use serde_json::{json, Value};
use std::fmt::Write as _;

/// FNV-1a over the canonical config text; stable across runs and platforms.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn version_string() -> String {
    format!("heisenheat {}", env!("CARGO_PKG_VERSION"))
}

/// Metadata block embedded in every JSON artifact.
pub fn metadata(config_text: &str, grid: Option<&GridSpec>) -> Value {
    let grid_meta = grid.map(|g| {
        json!({
            "rx": g.rx, "ry": g.ry, "rtau": g.rtau,
            "nx": g.nx, "ny": g.ny, "ntau": g.ntau,
        })
    });
    json!({
        "config_hash": config_hash(config_text),
        "version": version_string(),
        "grid": grid_meta,
    })
}

/// Deterministic float formatting for text artifacts.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:.9e}")
    } else {
        "inf".to_string()
    }
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

/// Log-log scatter/line plot as a standalone SVG document. Points with
/// nonpositive coordinates are dropped (they have no log-log image).
pub fn svg_loglog(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 55.0;

    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().cloned())
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    // pad 5%
    let (px, py) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
    let (x0, x1, y0, y1) = (x0 - px, x1 + px, y0 - py, y1 + py);
    let sx = |lx: f64| ML + (lx - x0) / (x1 - x0) * (W - ML - MR);
    let sy = |ly: f64| H - MB - (ly - y0) / (y1 - y0) * (H - MT - MB);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="monospace" font-size="15">{}</text>"#,
        W / 2.0,
        title
    );
    // axes
    let _ = writeln!(
        out,
        r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    );
    // decade ticks
    for d in (x0.floor() as i64)..=(x1.ceil() as i64) {
        let lx = d as f64;
        if lx < x0 || lx > x1 {
            continue;
        }
        let x = sx(lx);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#cccccc"/>"##,
            MT,
            H - MB
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-family="monospace" font-size="11">1e{d}</text>"#,
            H - MB + 16.0
        );
    }
    for d in (y0.floor() as i64)..=(y1.ceil() as i64) {
        let ly = d as f64;
        if ly < y0 || ly > y1 {
            continue;
        }
        let y = sy(ly);
        let _ = writeln!(
            out,
            r##"<line x1="{ML}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#cccccc"/>"##,
            W - MR
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="monospace" font-size="11">1e{d}</text>"#,
            ML - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="monospace" font-size="12">{}</text>"#,
        W / 2.0,
        H - 12.0,
        xlabel
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="monospace" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        ylabel
    );
    // series
    for (si, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x.log10()), sy(y.log10())))
            .collect();
        if path.is_empty() {
            continue;
        }
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{}/>"#,
            path.join(" "),
            s.color,
            dash
        );
        let ly = MT + 16.0 + 16.0 * si as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly:.2}" x2="{}" y2="{ly:.2}" stroke="{}" stroke-width="1.5"{}/>"#,
            ML + 8.0,
            ML + 36.0,
            s.color,
            dash
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" font-family="monospace" font-size="11">{}</text>"#,
            ML + 42.0,
            ly + 4.0,
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}
