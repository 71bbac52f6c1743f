//! Log-log SVG of median risk against sample size, one polyline per scheme.

use std::collections::BTreeMap;
use std::fmt::Write;

use spectral_shift::{Error, Result, RiskRecord};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Per-scheme `(log10 n, log10 median risk)` points, sorted by n.
fn series(records: &[RiskRecord]) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut grouped: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        if let Some(risk) = r.risk.filter(|v| *v > 0.0 && v.is_finite()) {
            grouped.entry(r.scheme.clone()).or_default().entry(r.n).or_default().push(risk);
        }
    }
    grouped
        .into_iter()
        .map(|(scheme, by_n)| {
            let pts = by_n.into_iter().map(|(n, v)| ((n as f64).log10(), median(v).log10())).collect();
            (scheme, pts)
        })
        .collect()
}

pub fn render(records: &[RiskRecord]) -> Result<String> {
    let data = series(records);
    if data.is_empty() {
        return Err(Error::Contract("no successful rows with positive risk to plot".into()));
    }
    let all = data.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (px(x0), px(x1), py(y1), py(y0));
    let _ = writeln!(
        svg,
        r#"<path d="M{left:.2},{top:.2} L{left:.2},{bottom:.2} L{right:.2},{bottom:.2}" fill="none" stroke="black"/>"#
    );
    for e in (x0 as i32)..=(x1 as i32) {
        let x = px(e as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#,
            bottom + 5.0,
            bottom + 20.0
        );
    }
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(e as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            left - 5.0,
            left - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">sample size n</text>"#,
        (left + right) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">median excess risk</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );
    for (i, (scheme, pts)) in data.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-scheme="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(scheme),
            coords.join(" ")
        );
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}" text-anchor="end">{}</text>"#,
            right,
            escape(scheme)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: usize, scheme: &str, risk: f64) -> RiskRecord {
        RiskRecord {
            n,
            trial: 0,
            scheme: scheme.into(),
            filter: "tikhonov".into(),
            lambda: 0.1,
            d_n: None,
            risk: Some(risk),
            status: "ok".into(),
            wall_ms: None,
        }
    }

    #[test]
    fn one_polyline_per_scheme() {
        let recs = vec![rec(100, "a", 0.1), rec(1000, "a", 0.01), rec(100, "b<&>", 0.2), rec(1000, "b<&>", 0.05)];
        let svg = render(&recs).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;&amp;&gt;"));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render(&[]).is_err());
    }
}
