//! Minimal self-contained SVG line charts with a log-scale y axis.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Lower and upper envelope, same abscissae as `points`.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

fn usable(y: f64) -> bool {
    y.is_finite() && y > 0.0
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders every series as one polyline; bands as translucent polygons.
pub fn log_chart(title: &str, y_label: &str, series: &[Series], reference: Option<f64>) -> String {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if usable(y) {
                xs.push(x);
                ys.push(y.log10());
            }
        }
        for &(x, lo, hi) in s.band.iter().flatten() {
            for y in [lo, hi] {
                if usable(y) {
                    xs.push(x);
                    ys.push(y.log10());
                }
            }
        }
    }
    if let Some(r) = reference.filter(|r| usable(*r)) {
        ys.push(r.log10());
    }
    let (x0, x1) = bounds(&xs, 0.0, 1.0);
    let (mut y0, mut y1) = bounds(&ys, -1.0, 1.0);
    y0 = y0.floor();
    y1 = y1.ceil().max(y0 + 1.0);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |ly: f64| TOP + (y1 - ly) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut decade = y0;
    while decade <= y1 + 1e-9 {
        let y = py(decade);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            decade as i64
        );
        decade += 1.0;
    }
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            TOP + ph + 18.0,
            (x * 100.0).round() / 100.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">cycle</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );
    if let Some(r) = reference.filter(|r| usable(*r)) {
        let y = py(r.log10());
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
            LEFT + pw
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(band) = &s.band {
            let kept: Vec<_> = band.iter().filter(|(_, lo, hi)| usable(*lo) && usable(*hi)).collect();
            if !kept.is_empty() {
                let mut pts = String::new();
                for (x, _, hi) in &kept {
                    let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(hi.log10()));
                }
                for (x, lo, _) in kept.iter().rev() {
                    let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(lo.log10()));
                }
                let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, pts.trim_end());
            }
        }
        let mut pts = String::new();
        for &(x, y) in s.points.iter().filter(|(_, y)| usable(*y)) {
            let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y.log10()));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"><title>{}</title></polyline>"#,
            pts.trim_end(),
            escape(&s.label)
        );
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(v: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() {
        return (lo, hi);
    }
    if max - min < 1e-12 {
        return (min - 0.5, max + 0.5);
    }
    (min, max)
}
