//! Self-contained SVG renderings of the score histogram and the binned
//! true-alert rates with their fitted line.

use std::fmt::Write;

use super::{BinSummary, LinearFit};

const W: f64 = 480.0;
const H: f64 = 320.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 44.0;

fn px(x: f64) -> f64 {
    LEFT + x * (W - LEFT - RIGHT)
}

fn py(frac: f64) -> f64 {
    H - BOTTOM - frac * (H - TOP - BOTTOM)
}

fn frame(title: &str, y_label: &str, y_max: f64, y_ticks: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="16" text-anchor="middle" font-size="13">{title}</text>"#, W / 2.0);
    let (x0, x1, y0, y1) = (px(0.0), px(1.0), py(0.0), py(1.0));
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, px(v), y0 + 16.0);
    }
    for k in 0..=y_ticks {
        let frac = k as f64 / y_ticks as f64;
        let label = if y_max <= 1.0 { format!("{:.1}", frac * y_max) } else { format!("{:.0}", frac * y_max) };
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#, x0 - 6.0, py(frac) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">alert score</text>"#, W / 2.0, H - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    s
}

fn bar(s: &mut String, lower: f64, width: f64, frac: f64, fill: &str) {
    let (x, w) = (px(lower) + 1.0, px(lower + width) - px(lower) - 2.0);
    let (y, h) = (py(frac), py(0.0) - py(frac));
    let _ = writeln!(s, r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}"/>"#);
}

pub fn histogram_svg(counts: &[usize], width: f64) -> String {
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut s = frame("Alerts by alert score", "number of alerts", max, 4);
    for (k, &c) in counts.iter().enumerate() {
        let lower = k as f64 * width;
        bar(&mut s, lower, width.min(1.0 - lower), c as f64 / max, "#7a9cc6");
    }
    s.push_str("</svg>\n");
    s
}

pub fn rate_svg(bins: &[BinSummary], fit: Option<&LinearFit>) -> String {
    let mut s = frame("True alert rate by alert score", "true alert rate", 1.0, 5);
    for b in bins {
        if let Some(rate) = b.true_alert_rate {
            bar(&mut s, b.lower, b.width.min(1.0 - b.lower), rate, "#c69a7a");
        }
    }
    if let Some(f) = fit {
        let at = |x: f64| (f.intercept + f.slope * x).clamp(0.0, 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            px(0.0),
            py(at(0.0)),
            px(1.0),
            py(at(1.0))
        );
    }
    s.push_str("</svg>\n");
    s
}
