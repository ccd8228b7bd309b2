//! Minimal SVG line charts for equity curves.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Line<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Each line is spread over the full width regardless of its length.
pub fn line_chart(title: &str, lines: &[Line<'_>]) -> String {
    let finite = lines.iter().flat_map(|l| l.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_w = W - 2.0 * PAD;
    let plot_h = H - 2.0 * PAD;
    let y = |v: f64| PAD + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="25" font-family="sans-serif" font-size="14">{}</text>"#, esc(title));
    let _ = writeln!(
        s,
        r##"<rect x="{PAD}" y="{PAD}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>"##
    );
    for (v, label) in [(hi, hi), (lo, lo)] {
        let _ = writeln!(
            s,
            r#"<text x="5" y="{:.1}" font-family="sans-serif" font-size="10">{label:.4}</text>"#,
            y(v) + 4.0
        );
    }
    for (i, line) in lines.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let n = line.values.len();
        let mut pts = String::new();
        for (k, v) in line.values.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let x = if n > 1 { PAD + plot_w * k as f64 / (n - 1) as f64 } else { PAD };
            let _ = write!(pts, "{x:.2},{:.2} ", y(*v));
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.trim_end());
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            PAD + 15.0 + 14.0 * i as f64,
            esc(line.label)
        );
    }
    s.push_str("</svg>\n");
    s
}
